"""Full architectures over paired embedding sequences.

Tags and their graphs (all heads produce 128-dim pooled features):

    roboka        per-modality KAN projection (128->128), concat, stacked KAN
                  fusion 256->128->1; trained with the uncertainty objective
    concat        linear classifier on [u_s; u_t]
    late_mlp      per-modality MLP 128->128 (relu), concat, MLP 256->128
                  (relu), linear -> 1
    xattn         one single-head scaled-dot-product self-attention block over
                  the 2-token sequence (u_s, u_t) with residual, mean over
                  tokens, linear -> 1
    unimodal_*    MLP 128->128 (relu) -> 1 on one modality (or plain linear
                  when built with classifier="linear")

Ablation tags reuse these graphs with a pinned objective. The no-KAN
variants swap every KAN layer for an MlpLayer of identical dimensions (relu
hidden, identity output), which is exactly the late_mlp graph. The unimodal
KAN ablations run the stacked-KAN path on a single modality.

    abl_a_kan        audio-only KAN stack, bce_only
    abl_t_kan        text-only KAN stack, bce_only
    abl_at_kan_bce   roboka graph, bce_only
    abl_at_mlp_sum   late_mlp graph, sum_c_bce
    abl_at_kan_sum   roboka graph, sum_c_bce
    abl_at_mlp_unc   late_mlp graph, uncertainty
    abl_roboka       alias of roboka

The prediction rule everywhere is label 1 iff logit >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .downstream import CnnHead, init_cnn_head
from .errors import ConfigError, ShapeError
from .kan import KanLayer, MlpLayer, init_kan_layer, init_mlp_layer
from .spline import SplineGrid

D_FEAT = 128  # d_u = d_k = d_f

OBJECTIVES = ("bce_only", "sum_c_bce", "uncertainty")

BASELINE_TAGS = ("roboka", "concat", "late_mlp", "xattn", "unimodal_audio", "unimodal_text")
ABLATION_TAGS = (
    "abl_a_kan",
    "abl_t_kan",
    "abl_at_kan_bce",
    "abl_at_mlp_sum",
    "abl_at_kan_sum",
    "abl_at_mlp_unc",
    "abl_roboka",
)
ARCH_TAGS = BASELINE_TAGS + ABLATION_TAGS

_FAMILY = {
    "roboka": "kan_fusion",
    "abl_roboka": "kan_fusion",
    "abl_at_kan_bce": "kan_fusion",
    "abl_at_kan_sum": "kan_fusion",
    "late_mlp": "mlp_fusion",
    "abl_at_mlp_sum": "mlp_fusion",
    "abl_at_mlp_unc": "mlp_fusion",
    "concat": "concat",
    "xattn": "xattn",
    "unimodal_audio": "unimodal_mlp",
    "unimodal_text": "unimodal_mlp",
    "abl_a_kan": "unimodal_kan",
    "abl_t_kan": "unimodal_kan",
}

_MODALITY = {
    "unimodal_audio": "audio",
    "abl_a_kan": "audio",
    "unimodal_text": "text",
    "abl_t_kan": "text",
}

DEFAULT_OBJECTIVE = {
    "roboka": "uncertainty",
    "abl_roboka": "uncertainty",
    "abl_at_mlp_unc": "uncertainty",
    "abl_at_kan_sum": "sum_c_bce",
    "abl_at_mlp_sum": "sum_c_bce",
    "abl_at_kan_bce": "bce_only",
    "abl_a_kan": "bce_only",
    "abl_t_kan": "bce_only",
    "concat": "bce_only",
    "late_mlp": "bce_only",
    "xattn": "bce_only",
    "unimodal_audio": "bce_only",
    "unimodal_text": "bce_only",
}


def arch_modality(arch_tag: str) -> str:
    """'audio', 'text', or 'both'."""
    return _MODALITY.get(arch_tag, "both")


def allowed_objectives(arch_tag: str) -> tuple[str, ...]:
    if arch_tag in _MODALITY:
        return ("bce_only",)
    if arch_tag.startswith("abl_"):
        return (DEFAULT_OBJECTIVE[arch_tag],)
    return OBJECTIVES


def check_objective(arch_tag: str, objective: str) -> None:
    if arch_tag not in ARCH_TAGS:
        raise ConfigError(f"unknown architecture tag {arch_tag!r}")
    if objective not in OBJECTIVES:
        raise ConfigError(f"unknown objective {objective!r}")
    if objective not in allowed_objectives(arch_tag):
        raise ConfigError(
            f"architecture {arch_tag!r} does not support objective {objective!r} "
            f"(allowed: {', '.join(allowed_objectives(arch_tag))})"
        )


@dataclass
class AttnBlock:
    """Single-head scaled-dot-product self-attention with residual output."""

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray

    def forward(self, x: np.ndarray):
        """x: (n, tokens, d). Returns (x + attention output, cache)."""
        q = x @ self.wq.T + self.bq
        k = x @ self.wk.T + self.bk
        v = x @ self.wv.T + self.bv
        scores = q @ k.transpose(0, 2, 1) / np.sqrt(x.shape[-1])
        scores -= scores.max(axis=-1, keepdims=True)
        p = np.exp(scores)
        p /= p.sum(axis=-1, keepdims=True)
        ctx = p @ v
        out = x + ctx @ self.wo.T + self.bo
        return out, (x, q, k, v, p, ctx)

    def backward(self, cache, d_out: np.ndarray):
        x, q, k, v, p, ctx = cache
        grads = {}
        grads["wo"] = np.einsum("ntd,nte->de", d_out, ctx)
        grads["bo"] = d_out.sum(axis=(0, 1))
        d_ctx = d_out @ self.wo
        d_p = d_ctx @ v.transpose(0, 2, 1)
        d_v = p.transpose(0, 2, 1) @ d_ctx
        d_scores = p * (d_p - (d_p * p).sum(axis=-1, keepdims=True))
        d_scores /= np.sqrt(x.shape[-1])
        d_q = d_scores @ k
        d_k = d_scores.transpose(0, 2, 1) @ q
        grads["wq"] = np.einsum("ntd,nte->de", d_q, x)
        grads["bq"] = d_q.sum(axis=(0, 1))
        grads["wk"] = np.einsum("ntd,nte->de", d_k, x)
        grads["bk"] = d_k.sum(axis=(0, 1))
        grads["wv"] = np.einsum("ntd,nte->de", d_v, x)
        grads["bv"] = d_v.sum(axis=(0, 1))
        d_x = d_out + d_q @ self.wq + d_k @ self.wk + d_v @ self.wv
        return grads, d_x

    def n_params(self) -> int:
        return sum(
            a.size for a in (self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo)
        )


_PARAM_FIELDS = {
    CnnHead: ("w1", "b1", "w2", "b2"),
    KanLayer: ("coeffs", "base_weight"),
    MlpLayer: ("weight", "bias"),
    AttnBlock: ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"),
}


@dataclass
class ModelParams:
    """Complete learnable state of one architecture."""

    arch_tag: str
    d_s: int
    d_t: int
    grid: SplineGrid
    components: dict[str, object]
    log_sigma_c: np.ndarray = field(default_factory=lambda: np.array(0.0))
    log_sigma_bce: np.ndarray = field(default_factory=lambda: np.array(0.0))
    kan_base: bool = False
    classifier: str = "mlp"  # unimodal baseline head style: "mlp" or "linear"

    @property
    def family(self) -> str:
        return _FAMILY[self.arch_tag]

    @property
    def modality(self) -> str:
        return arch_modality(self.arch_tag)

    def parameters(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in fixed declaration order."""
        out: dict[str, np.ndarray] = {}
        for cname, comp in self.components.items():
            for pfield in _PARAM_FIELDS[type(comp)]:
                arr = getattr(comp, pfield)
                if arr is not None:
                    out[f"{cname}.{pfield}"] = arr
        out["log_sigma_c"] = self.log_sigma_c
        out["log_sigma_bce"] = self.log_sigma_bce
        return out

    def n_params(self) -> int:
        return sum(a.size for a in self.parameters().values())

    def copy(self) -> "ModelParams":
        comps = {}
        for name, comp in self.components.items():
            kwargs = {}
            for pfield in _PARAM_FIELDS[type(comp)]:
                arr = getattr(comp, pfield)
                kwargs[pfield] = None if arr is None else arr.copy()
            if isinstance(comp, KanLayer):
                kwargs["grid"] = comp.grid
            if isinstance(comp, MlpLayer):
                kwargs["activation"] = comp.activation
            comps[name] = type(comp)(**kwargs)
        return ModelParams(
            arch_tag=self.arch_tag,
            d_s=self.d_s,
            d_t=self.d_t,
            grid=self.grid,
            components=comps,
            log_sigma_c=self.log_sigma_c.copy(),
            log_sigma_bce=self.log_sigma_bce.copy(),
            kan_base=self.kan_base,
            classifier=self.classifier,
        )


def build_model(
    arch_tag: str,
    d_s: int,
    d_t: int,
    *,
    grid_lo: float = -2.0,
    grid_hi: float = 2.0,
    grid_intervals: int = 8,
    seed: int = 0,
    kan_base: bool = False,
    classifier: str = "mlp",
) -> ModelParams:
    """Seeded initialization of the named architecture."""
    if arch_tag not in ARCH_TAGS:
        raise ConfigError(f"unknown architecture tag {arch_tag!r}")
    if classifier not in ("mlp", "linear"):
        raise ConfigError(f"classifier must be 'mlp' or 'linear', got {classifier!r}")
    rng = np.random.default_rng([int(seed), 17])
    grid = SplineGrid(lo=grid_lo, hi=grid_hi, intervals=int(grid_intervals))
    family = _FAMILY[arch_tag]
    modality = arch_modality(arch_tag)
    comps: dict[str, object] = {}

    # scale 0.5 keeps pooled features near the spline grid's interior at init
    if modality in ("audio", "both"):
        comps["head_audio"] = init_cnn_head(rng, d_s, scale=0.5)
    if modality in ("text", "both"):
        comps["head_text"] = init_cnn_head(rng, d_t, scale=0.5)

    if family == "kan_fusion":
        comps["proj_audio"] = init_kan_layer(rng, D_FEAT, D_FEAT, grid, kan_base)
        comps["proj_text"] = init_kan_layer(rng, D_FEAT, D_FEAT, grid, kan_base)
        comps["fuse1"] = init_kan_layer(rng, 2 * D_FEAT, D_FEAT, grid, kan_base)
        comps["fuse2"] = init_kan_layer(rng, D_FEAT, 1, grid, kan_base)
    elif family == "mlp_fusion":
        comps["proj_audio"] = init_mlp_layer(rng, D_FEAT, D_FEAT, "relu")
        comps["proj_text"] = init_mlp_layer(rng, D_FEAT, D_FEAT, "relu")
        comps["fuse1"] = init_mlp_layer(rng, 2 * D_FEAT, D_FEAT, "relu")
        comps["fuse2"] = init_mlp_layer(rng, D_FEAT, 1, "identity")
    elif family == "concat":
        comps["clf"] = init_mlp_layer(rng, 2 * D_FEAT, 1, "identity")
    elif family == "xattn":
        std = np.sqrt(1.0 / D_FEAT)
        comps["attn"] = AttnBlock(
            wq=rng.normal(0.0, std, (D_FEAT, D_FEAT)),
            bq=np.zeros(D_FEAT),
            wk=rng.normal(0.0, std, (D_FEAT, D_FEAT)),
            bk=np.zeros(D_FEAT),
            wv=rng.normal(0.0, std, (D_FEAT, D_FEAT)),
            bv=np.zeros(D_FEAT),
            wo=rng.normal(0.0, std, (D_FEAT, D_FEAT)),
            bo=np.zeros(D_FEAT),
        )
        comps["readout"] = init_mlp_layer(rng, D_FEAT, 1, "identity")
    elif family == "unimodal_mlp":
        if classifier == "mlp":
            comps["clf_hidden"] = init_mlp_layer(rng, D_FEAT, D_FEAT, "relu")
        comps["clf_out"] = init_mlp_layer(rng, D_FEAT, 1, "identity")
    elif family == "unimodal_kan":
        key = "proj_audio" if modality == "audio" else "proj_text"
        comps[key] = init_kan_layer(rng, D_FEAT, D_FEAT, grid, kan_base)
        comps["fuse1"] = init_kan_layer(rng, D_FEAT, D_FEAT, grid, kan_base)
        comps["fuse2"] = init_kan_layer(rng, D_FEAT, 1, grid, kan_base)

    return ModelParams(
        arch_tag=arch_tag,
        d_s=int(d_s),
        d_t=int(d_t),
        grid=grid,
        components=comps,
        kan_base=kan_base,
        classifier=classifier,
    )


@dataclass
class ForwardPass:
    logits: np.ndarray  # (n,)
    u_s: np.ndarray | None
    u_t: np.ndarray | None
    cache: dict


def _stack_head(head: CnnHead, seqs) -> np.ndarray:
    return np.stack([head.forward(h) for h in seqs], axis=0)


def model_forward(p: ModelParams, audio_seqs=None, text_seqs=None) -> ForwardPass:
    """Batched forward pass; unimodal tags ignore the other modality."""
    modality = p.modality
    u_s = u_t = None
    if modality in ("audio", "both"):
        if audio_seqs is None:
            raise ShapeError(f"{p.arch_tag} needs audio sequences")
        u_s = _stack_head(p.components["head_audio"], audio_seqs)
    if modality in ("text", "both"):
        if text_seqs is None:
            raise ShapeError(f"{p.arch_tag} needs text sequences")
        u_t = _stack_head(p.components["head_text"], text_seqs)
    cache: dict = {}
    c = p.components
    family = p.family

    if family in ("kan_fusion", "mlp_fusion"):
        r_s = c["proj_audio"].forward(u_s)
        r_t = c["proj_text"].forward(u_t)
        z0 = np.concatenate([r_s, r_t], axis=1)
        z1 = c["fuse1"].forward(z0)
        logits = c["fuse2"].forward(z1)[:, 0]
        cache.update(z0=z0, z1=z1)
    elif family == "concat":
        z = np.concatenate([u_s, u_t], axis=1)
        logits = c["clf"].forward(z)[:, 0]
        cache.update(z=z)
    elif family == "xattn":
        x = np.stack([u_s, u_t], axis=1)  # (n, 2, 128)
        y, attn_cache = c["attn"].forward(x)
        mean = y.mean(axis=1)
        logits = c["readout"].forward(mean)[:, 0]
        cache.update(attn=attn_cache, mean=mean, n_tokens=x.shape[1])
    elif family == "unimodal_mlp":
        u = u_s if modality == "audio" else u_t
        if p.classifier == "mlp":
            hidden = c["clf_hidden"].forward(u)
            cache.update(hidden=hidden)
        else:
            hidden = u
        logits = c["clf_out"].forward(hidden)[:, 0]
    else:  # unimodal_kan
        u = u_s if modality == "audio" else u_t
        proj = c["proj_audio"] if modality == "audio" else c["proj_text"]
        r = proj.forward(u)
        z1 = c["fuse1"].forward(r)
        logits = c["fuse2"].forward(z1)[:, 0]
        cache.update(r=r, z1=z1)

    cache.update(audio_seqs=audio_seqs, text_seqs=text_seqs)
    return ForwardPass(logits=logits, u_s=u_s, u_t=u_t, cache=cache)


def _heads_backward(
    p: ModelParams, fp: ForwardPass, du_s, du_t, grads: dict[str, np.ndarray]
) -> None:
    if du_s is not None:
        head = p.components["head_audio"]
        for i, h in enumerate(fp.cache["audio_seqs"]):
            g, _ = head.backward(h, du_s[i])
            for key, val in g.items():
                grads[f"head_audio.{key}"] += val
    if du_t is not None:
        head = p.components["head_text"]
        for i, h in enumerate(fp.cache["text_seqs"]):
            g, _ = head.backward(h, du_t[i])
            for key, val in g.items():
                grads[f"head_text.{key}"] += val


def model_backward(
    p: ModelParams,
    fp: ForwardPass,
    d_logits: np.ndarray,
    du_s: np.ndarray | None = None,
    du_t: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Gradient of sum(d_logits * logits) [+ sum(du * u) terms] w.r.t. every
    parameter, keyed like `parameters()`. Extra du_s/du_t terms carry the
    contrastive pull on the pooled features.
    """
    grads = {name: np.zeros_like(arr) for name, arr in p.parameters().items()}
    c = p.components
    family = p.family
    dlog = np.asarray(d_logits, dtype=np.float64)[:, None]
    extra_s = np.zeros_like(fp.u_s) if fp.u_s is not None else None
    extra_t = np.zeros_like(fp.u_t) if fp.u_t is not None else None
    if du_s is not None:
        if extra_s is None:
            raise ShapeError("du_s given but the model has no audio branch")
        extra_s += du_s
    if du_t is not None:
        if extra_t is None:
            raise ShapeError("du_t given but the model has no text branch")
        extra_t += du_t

    if family in ("kan_fusion", "mlp_fusion"):
        z0, z1 = fp.cache["z0"], fp.cache["z1"]
        g2 = c["fuse2"].backward(z1, dlog)
        _store(grads, "fuse2", c["fuse2"], g2)
        g1 = c["fuse1"].backward(z0, g2[-1])
        _store(grads, "fuse1", c["fuse1"], g1)
        dz0 = g1[-1]
        gs = c["proj_audio"].backward(fp.u_s, dz0[:, :D_FEAT])
        _store(grads, "proj_audio", c["proj_audio"], gs)
        gt = c["proj_text"].backward(fp.u_t, dz0[:, D_FEAT:])
        _store(grads, "proj_text", c["proj_text"], gt)
        extra_s += gs[-1]
        extra_t += gt[-1]
    elif family == "concat":
        g = c["clf"].backward(fp.cache["z"], dlog)
        _store(grads, "clf", c["clf"], g)
        extra_s += g[-1][:, :D_FEAT]
        extra_t += g[-1][:, D_FEAT:]
    elif family == "xattn":
        g = c["readout"].backward(fp.cache["mean"], dlog)
        _store(grads, "readout", c["readout"], g)
        d_y = np.repeat(g[-1][:, None, :], fp.cache["n_tokens"], axis=1) / fp.cache["n_tokens"]
        attn_grads, d_x = c["attn"].backward(fp.cache["attn"], d_y)
        for key, val in attn_grads.items():
            grads[f"attn.{key}"] += val
        extra_s += d_x[:, 0, :]
        extra_t += d_x[:, 1, :]
    elif family == "unimodal_mlp":
        u = fp.u_s if p.modality == "audio" else fp.u_t
        if p.classifier == "mlp":
            g_out = c["clf_out"].backward(fp.cache["hidden"], dlog)
            _store(grads, "clf_out", c["clf_out"], g_out)
            g_hid = c["clf_hidden"].backward(u, g_out[-1])
            _store(grads, "clf_hidden", c["clf_hidden"], g_hid)
            du = g_hid[-1]
        else:
            g_out = c["clf_out"].backward(u, dlog)
            _store(grads, "clf_out", c["clf_out"], g_out)
            du = g_out[-1]
        if p.modality == "audio":
            extra_s += du
        else:
            extra_t += du
    else:  # unimodal_kan
        u = fp.u_s if p.modality == "audio" else fp.u_t
        proj_name = "proj_audio" if p.modality == "audio" else "proj_text"
        g2 = c["fuse2"].backward(fp.cache["z1"], dlog)
        _store(grads, "fuse2", c["fuse2"], g2)
        g1 = c["fuse1"].backward(fp.cache["r"], g2[-1])
        _store(grads, "fuse1", c["fuse1"], g1)
        gp = c[proj_name].backward(u, g1[-1])
        _store(grads, proj_name, c[proj_name], gp)
        if p.modality == "audio":
            extra_s += gp[-1]
        else:
            extra_t += gp[-1]

    _heads_backward(
        p,
        fp,
        extra_s if fp.u_s is not None else None,
        extra_t if fp.u_t is not None else None,
        grads,
    )
    return grads


def _store(grads: dict, name: str, comp, g: tuple) -> None:
    if isinstance(comp, KanLayer):
        grads[f"{name}.coeffs"] += g[0]
        if comp.base_weight is not None:
            grads[f"{name}.base_weight"] += g[1]
    else:  # MlpLayer
        grads[f"{name}.weight"] += g[0]
        grads[f"{name}.bias"] += g[1]


def predict(p: ModelParams, audio_seqs=None, text_seqs=None) -> np.ndarray:
    """Hard labels under the fixed 0.5 probability threshold (logit >= 0)."""
    fp = model_forward(p, audio_seqs, text_seqs)
    return (fp.logits >= 0.0).astype(np.int64)
