"""Write a random bounded-treewidth corpus as ``.sc`` files."""
from __future__ import annotations

import argparse
from dataclasses import fields
from pathlib import Path

from twcut.generators import CorpusConfig, corpus
from twcut.instance import serialize_instance


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    for f in fields(CorpusConfig):
        ap.add_argument(f"--{f.name.replace('_', '-')}", type=type(f.default), default=f.default)
    args = ap.parse_args()
    cfg = CorpusConfig(**{f.name: getattr(args, f.name) for f in fields(CorpusConfig)})
    args.out.mkdir(parents=True, exist_ok=True)
    for i, inst in enumerate(corpus(cfg)):
        (args.out / f"inst_{i:03d}.sc").write_text(serialize_instance(inst))
    print(f"wrote {cfg.count} instances to {args.out}")


if __name__ == "__main__":
    main()
