#!/usr/bin/env python3
"""Run every verification oracle and print a one-line result per check."""

import sys

from gvfcoord.oracles import ORACLES, run_oracle


def main() -> int:
    all_ok = True
    for name in sorted(ORACLES):
        result = run_oracle(name)
        ok = bool(result.pop("pass"))
        all_ok &= ok
        detail = ", ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in sorted(result.items()))
        print(f"{'PASS' if ok else 'FAIL'}  {name:24s} {detail}")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
