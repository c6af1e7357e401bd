"""Offline helper that turns raw audio/transcript corpora into the
manifest.jsonl + float32-blob dataset layout consumed by the detection
package, by running frozen pretrained encoders and a speech recognizer.
"""

__version__ = "0.1.0"

from .jobs import ExtractionJob, load_job
from .extract import extract
from .wer import word_error_rate

__all__ = ["ExtractionJob", "extract", "load_job", "word_error_rate"]
