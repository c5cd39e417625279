"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python scripts/run_acceptance.py            # everything, CIFAR-10 criterion included
    python scripts/run_acceptance.py -m "not slow"

Point ZNORM_LAB_CIFAR10 at an unpacked cifar-10-batches-bin directory to
run the CIFAR-10 subset comparison.
"""
import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    tests = Path(__file__).resolve().parents[1] / "tests" / "test_acceptance.py"
    sys.exit(pytest.main([str(tests), "-q", "-p", "no:cacheprovider", *sys.argv[1:]]))
