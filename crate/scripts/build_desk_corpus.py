"""Builds tests/data/desk_corpus.txt.gz from English docstrings found in the
local Python installation. One paragraph per line, every third paragraph,
capped at 10 MB."""
import ast
import gzip
import os
import re
import sys

ROOTS = ["/usr/lib/python3.10", "/usr/local/lib/python3.10/dist-packages"]
LIMIT = 10_000_000
WORD = re.compile(r"^[A-Za-z][a-z]*[,.;:]?$")


def paragraphs():
    files = []
    for root in ROOTS:
        for d, dirs, names in os.walk(root):
            dirs.sort()
            files.extend(os.path.join(d, n) for n in sorted(names) if n.endswith(".py"))
    seen = set()
    for path in files:
        try:
            tree = ast.parse(open(path, encoding="utf-8").read())
        except Exception:
            continue
        for node in ast.walk(tree):
            if not isinstance(node, (ast.Module, ast.FunctionDef, ast.ClassDef, ast.AsyncFunctionDef)):
                continue
            doc = ast.get_docstring(node)
            if not doc:
                continue
            for para in re.split(r"\n\s*\n", doc):
                para = " ".join(para.split())
                toks = para.split()
                if len(toks) < 8:
                    continue
                if sum(1 for t in toks if WORD.match(t)) / len(toks) < 0.8:
                    continue
                if para in seen:
                    continue
                seen.add(para)
                yield para


def main(out_path):
    out, total = [], 0
    for i, para in enumerate(paragraphs()):
        if i % 3:
            continue
        if total + len(para) + 1 > LIMIT:
            break
        out.append(para)
        total += len(para) + 1
    with gzip.open(out_path, "wt", encoding="utf-8") as f:
        f.write("\n".join(out) + "\n")
    print(f"{len(out)} lines, {total} bytes", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/data/desk_corpus.txt.gz")
