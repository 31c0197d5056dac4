#!/usr/bin/env python3
"""Regenerate the shipped scenario fixtures and the golden log.

The committed outputs are normative: CI compares fresh runs byte-for-byte
against them, so regenerate only on a deliberate format change.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from xri.scenario import builtin_metaplant, metaplant_dict, rv_traveller_dict  # noqa: E402
from xri.sim import run  # noqa: E402


def main() -> None:
    scenarios = ROOT / "scenarios"
    scenarios.mkdir(exist_ok=True)
    for name, doc in (("metaplant", metaplant_dict()),
                      ("rv_traveller", rv_traveller_dict())):
        path = scenarios / name
        path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                        encoding="utf-8")
        print(f"wrote {path}")

    golden = ROOT / "tests" / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    result = run(builtin_metaplant())
    log_path = golden / "metaplant_seed42.log"
    result.log.write(log_path)
    print(f"wrote {log_path} ({len(result.log)} records)")
    metrics_path = golden / "metaplant_seed42.metrics.json"
    metrics_path.write_text(result.metrics.to_json(), encoding="utf-8")
    print(f"wrote {metrics_path}")


if __name__ == "__main__":
    main()
