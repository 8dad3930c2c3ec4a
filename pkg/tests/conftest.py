import sys
from pathlib import Path

TESTS_DIR = Path(__file__).resolve().parent

# make shared helpers (wire_fixtures, reference_*) importable from any test
sys.path.insert(0, str(TESTS_DIR))

GOLDEN_DIR = TESTS_DIR / "golden"
STUB_DETECTOR = TESTS_DIR / "stub_detector.py"
