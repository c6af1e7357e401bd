"""roboka-extract: run an extraction job file.

Exit codes: 0 success (even with skipped records, which are reported),
1 bad job file or arguments, 2 model load failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encoders import ModelLoadError
from .extract import extract
from .jobs import JobError, load_job


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="roboka-extract", description=__doc__)
    parser.add_argument("--job", required=True, help="extraction job JSON file")
    parser.add_argument("--out", help="output dataset directory (overrides the job file)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--simulated-encoders",
        action="store_true",
        help="use the deterministic offline encoders instead of real weights",
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1

    try:
        job = load_job(args.job)
    except JobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    kwargs = {}
    if args.simulated_encoders:
        from .encoders import SimulatedAudioEncoder, SimulatedTextEncoder

        class _NoAsr:
            def transcribe(self, wave_data, sr=16_000):
                return ""

        kwargs = {
            "audio_encoder": SimulatedAudioEncoder(job.audio_encoder),
            "text_encoder": SimulatedTextEncoder(job.text_encoder),
            "transcriber": _NoAsr(),
        }
    try:
        report = extract(job, out_dir=args.out, base_dir=Path(args.job).parent,
                         workers=args.workers, **kwargs)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(report.to_dict()))
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
