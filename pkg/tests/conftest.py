import os
import tempfile
from pathlib import Path

import pytest

_SCRATCH = Path(tempfile.mkdtemp(prefix="lab-tests-"))
os.environ.setdefault("LAB_DB_PATH", str(_SCRATCH / "lab_runs.db"))
os.environ.setdefault("LAB_LAB__OUTPUT_DIR", str(_SCRATCH / "runs"))

from app.core.config import Settings, apply_settings  # noqa: E402


@pytest.fixture
def restore_settings():
    """Put the shared settings back after a test that overrides them."""
    yield
    apply_settings(Settings())
