"""Mood-conditioned personalized radio: training pipeline, session engine, service."""

from .catalog import (
    AUDIO_EMBEDDING_DIM,
    Catalog,
    CatalogError,
    Mood,
    eligible_for_radio,
    load_catalog,
)
from .sessions import (
    SessionConfig,
    SessionDeps,
    SessionState,
    apply_feedback,
    next_track,
    start_session,
)

__version__ = "0.1.0"

__all__ = [
    "AUDIO_EMBEDDING_DIM",
    "Catalog",
    "CatalogError",
    "Mood",
    "SessionConfig",
    "SessionDeps",
    "SessionState",
    "apply_feedback",
    "eligible_for_radio",
    "load_catalog",
    "next_track",
    "start_session",
    "__version__",
]
