#!/usr/bin/env python3
"""Rewrite manifest.json for a template directory after editing its files."""
import hashlib
import json
import pathlib
import sys


def main(directory: str) -> None:
    root = pathlib.Path(directory)
    entries = []
    for path in sorted(root.glob("*.txt")):
        entries.append({
            "id": path.stem,
            "file": path.name,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        })
    manifest = {"version": root.name, "templates": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/templates/v1")
