"""No-op trainer: validates the train file, emits a mock student descriptor.

Implements the trainer contract end to end without touching any ML stack;
dry runs and tests wire it in as trainer_cmd:

    python -m fdd.mock_trainer --train-file F --round R --out-dir D
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .mocks import STUDENT_MODEL, STUDENT_URL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fdd.mock_trainer")
    parser.add_argument("--train-file", required=True)
    parser.add_argument("--round", type=int, required=True)
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args(argv)

    try:
        n = 0
        with open(args.train_file, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if not rec.get("input") or not rec.get("output"):
                    raise ValueError("examples need non-empty input and output")
                n += 1
        if n == 0:
            raise ValueError("train file is empty")
    except (OSError, ValueError) as exc:
        print(f"mock_trainer: {exc}", file=sys.stderr)
        return 3

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "endpoint.json", "w", encoding="utf-8") as f:
        json.dump({"base_url": STUDENT_URL, "model_name": STUDENT_MODEL}, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out_dir / "train_stats.json", "w", encoding="utf-8") as f:
        json.dump({"examples": n, "round": args.round}, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
