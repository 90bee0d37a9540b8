#!/usr/bin/env python3
"""Regenerate the synthetic evaluation dataset under tests/fixtures/dataset.

The scenarios are deterministic, so rerunning this script reproduces the
checked-in files byte for byte.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from support.dataset import write_dataset  # noqa: E402


def main() -> None:
    out = ROOT / "tests" / "fixtures" / "dataset"
    names = write_dataset(out)
    print(f"wrote {len(names)} scenarios to {out}")


if __name__ == "__main__":
    main()
