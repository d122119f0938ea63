#!/usr/bin/env python3
"""Regenerate the deterministic fixture weight bundle used by the test suite.

The fixture is a seeded random stack (not trained): good enough to exercise
every runtime path, including adversarial shift/convexity checks.
"""

import sys
from pathlib import Path

from luckyhdr.nets import random_stack

OUT = Path(__file__).resolve().parent.parent / "weights" / "fixture.lhdrw"


def main() -> int:
    OUT.parent.mkdir(parents=True, exist_ok=True)
    stack = random_stack(seed=20_24, scale=1.0)
    stack.save(OUT)
    print(f"wrote {OUT} ({stack.to_bundle().param_count} params)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
