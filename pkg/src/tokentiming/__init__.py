"""Token-level timing control for a toy flow-matching speech generator.

Modules
-------
track         timing tracks, unit conversion, track files
align         word-record and TextGrid parsing, text normalization
crossval      agreement filter between two alignment sources
build         word alignments to token timing tracks, duration dropout
conditioning  zero-corrected timing residuals and gates
flow          flow-matching objective, generator network, Euler sampler
training      training loop and checkpoints
world         synthetic token world with an oracle aligner
metrics       timing metrics and edit statistics
editing       local edits, scenario and stress suites
bench         synthesis-and-scoring drivers
cli           ``tokentiming`` command line
"""

from .track import (
    FrameRate,
    LogScale,
    TimingTrack,
    TokenTiming,
    deserialize_track,
    frames_to_ms,
    log_compress,
    ms_to_frames,
    serialize_track,
    track_total_span,
)

__version__ = "0.1.0"
