import os
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
DEMO_SNAPSHOT = ROOT / "data" / "demo_snapshot"


def real_snapshot_dir() -> Path:
    return Path(os.environ.get("MASKROADMAP_SNAPSHOT", ROOT / "data" / "snapshot"))


@pytest.fixture(scope="session")
def demo_snapshot():
    from maskroadmap.dataset import load_snapshot

    if not (DEMO_SNAPSHOT / "panel.csv").is_file():
        import subprocess
        import sys

        subprocess.run([sys.executable, str(ROOT / "scripts" / "make_demo_snapshot.py"), str(DEMO_SNAPSHOT)], check=True)
    return load_snapshot(DEMO_SNAPSHOT)
