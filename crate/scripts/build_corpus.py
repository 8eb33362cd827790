#!/usr/bin/env python3
"""Compile each documented function of a C file to its own IR module and
write one JSONL corpus record per function.

Usage: build_corpus.py functions.c corpus.jsonl

Every function must be preceded by a `/** ... */` comment and end with a
closing brace in column 0. Lines before the first comment (includes,
struct definitions) are prepended to every function.
"""

import json
import re
import subprocess
import sys
import tempfile
from pathlib import Path

CLANG = ["clang", "-S", "-emit-llvm", "-O0", "-fno-discard-value-names",
         "-Xclang", "-disable-O0-optnone", "-o", "-"]
FUNC = re.compile(r"(/\*\*.*?\*/)\n(.*?\n}\n)", re.S)
NAME = re.compile(r"(\w+)\s*\(")


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    text = src.read_text()
    prelude = text[: text.index("/**")]
    records = []
    with tempfile.TemporaryDirectory() as tmp:
        for comment, body in FUNC.findall(text):
            name = NAME.search(body.splitlines()[0]).group(1)
            unit = Path(tmp) / f"{name}.c"
            unit.write_text(prelude + body)
            ir = subprocess.run(CLANG + [str(unit)], check=True,
                                capture_output=True, text=True).stdout
            # drop the temporary path so records are reproducible
            ir = "\n".join(l for l in ir.splitlines()
                           if not l.startswith(("; ModuleID", "source_filename")))
            records.append({"id": name, "query": comment, "ir": ir + "\n",
                            "code": body.rstrip("\n"), "function": name})
    with out.open("w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    print(f"wrote {len(records)} records to {out}")


if __name__ == "__main__":
    main()
