"""Regenerates the header-split fixture documents and their golden file.

The golden header paths come from a small stack parser written here, kept
independent of the C++ splitter on purpose.
"""
import json
import random
import re
from pathlib import Path

HERE = Path(__file__).parent
WORDS = ("camp school family trauma language clinic teacher child parent "
         "screening referral housing asylum therapy session community "
         "resilience caregiver stress outreach support wellbeing").split()
HEADING = re.compile(r"^ {0,3}(#{1,6})(?:[ \t]+(.*?))?[ \t]*$")


def heading(line):
    m = HEADING.match(line)
    if not m:
        return None
    title = m.group(2) or ""
    closing = re.search(r"(^|[ \t])#+$", title)
    if closing:
        title = title[: closing.start()].rstrip()
    return len(m.group(1)), title


def paragraph(rng, n):
    words = [rng.choice(WORDS) for _ in range(n)]
    return " ".join(words).capitalize() + "."


def make_doc(rng, i):
    lines = []
    if i % 4 == 0:
        lines += [paragraph(rng, rng.randint(5, 30)), ""]
    depth = 0
    for s in range(rng.randint(3, 9)):
        depth = rng.randint(1, min(4, depth + 1 + (s % 3 == 2)))
        title = f"Section {i}.{s} {rng.choice(WORDS).title()}"
        if s % 5 == 3:
            title += " ##"
        lines.append("#" * depth + " " + title)
        if s % 6 == 4:
            continue  # heading-only section
        lines.append("")
        for _ in range(rng.randint(1, 3)):
            lines += [paragraph(rng, rng.randint(8, 120)), ""]
        if s % 7 == 5:
            lines += ["#hashtag is not a heading " + paragraph(rng, 6), ""]
    return "\n".join(lines) + "\n"


def golden(doc_id, text):
    out, stack, body = [], [], []

    def flush():
        tokens = " ".join(body).split()
        if tokens:
            out.append({"doc_id": doc_id, "header_path": [t for _, t in stack], "body": " ".join(tokens)})
        body.clear()

    for line in text.split("\n"):
        h = heading(line)
        if h is None:
            body.append(line)
            continue
        flush()
        while stack and stack[-1][0] >= h[0]:
            stack.pop()
        stack.append(h)
    flush()
    return out


def main():
    rng = random.Random(20240611)
    docs = HERE / "docs"
    docs.mkdir(exist_ok=True)
    rows = []
    for i in range(20):
        doc_id = f"doc{i:02d}"
        text = make_doc(rng, i)
        (docs / f"{doc_id}.md").write_text(text)
        rows += golden(doc_id, text)
    with open(HERE / "golden.jsonl", "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
