#!/usr/bin/env python3
"""Stand-alone rule-trace oracle for the risk labeler.

Re-implements normalization, pattern counting and the level rules from their
written definitions, without sharing code with the Rust crate, and writes the
golden file consumed by `tests/labeler_golden.rs`.

    python3 labeler_oracle.py default.dict queries.txt > labeler_golden.tsv

`queries.txt` holds one percent-encoded query per line. Output lines are
`<percent-encoded query>\t<level>\t<trace>`.
"""

import html
import re
import sys
from urllib.parse import quote_from_bytes, unquote_to_bytes

WS = b" \t\r\n\x0c"
CEILING = {"A": 4, "B": 3, "C": 2}


def l1(text: bytes) -> bytes:
    # lowercase, drop whitespace, cut /* ... */ (opener may form across removed
    # whitespace or across a previous cut; unterminated runs to the end)
    out = bytearray()
    in_comment = False
    prev_star = False
    for b in text:
        if b in WS:
            continue
        if 65 <= b <= 90:
            b += 32
        if in_comment:
            if prev_star and b == ord("/"):
                in_comment = False
                prev_star = False
            else:
                prev_star = b == ord("*")
            continue
        out.append(b)
        if out.endswith(b"/*"):
            del out[-2:]
            in_comment = True
            prev_star = False
    return bytes(out)


ENTITY = re.compile(rb"&([A-Za-z0-9#]{1,39});")


def entities(text: bytes) -> bytes:
    def sub(m):
        span = m.group(0).decode("ascii")
        dec = html.unescape(span)
        return span.encode() if dec == span else dec.encode("utf-8")

    return ENTITY.sub(sub, text)


def l2(text: bytes) -> bytes:
    dec = entities(unquote_to_bytes(text))
    out = bytearray()
    for i, b in enumerate(dec):
        if b in WS:
            continue
        if (65 <= b <= 90) or (97 <= b <= 122):
            if b in (ord("x"), ord("X")) and i > 0 and dec[i - 1] in (ord("\\"), ord("0")):
                out.append(ord("x"))
            continue
        out.append(b)
    return bytes(out)


def load_dict(path):
    alpha, symbols = [], []
    for line in open(path, encoding="utf-8"):
        line = line.rstrip("\n")
        if not line:
            continue
        kind, pat, rule = line.split(",")
        if kind == "A":
            text = unquote_to_bytes(pat).decode()
            alpha.append((text, bytes(c for c in text.encode() if c not in WS), int(rule)))
        else:
            text = pat if pat == "\\d+" else unquote_to_bytes(pat).decode()
            symbols.append((text, text.encode(), rule))
    assert len(alpha) == 30 and len(symbols) == 20
    return alpha, symbols


def occurrences(text: bytes, patterns):
    """All (len, start, slot) candidates; `\\d+` matches maximal digit runs."""
    cands = []
    for slot, (name, key) in enumerate(patterns):
        if name == "\\d+":
            for m in re.finditer(rb"[0-9]+", text):
                cands.append((m.end() - m.start(), m.start(), slot))
        else:
            start = text.find(key)
            while start != -1:
                cands.append((len(key), start, slot))
                start = text.find(key, start + 1)
    return cands


def count(text: bytes, patterns):
    taken = [False] * len(text)
    counts = [0] * len(patterns)
    for length, start, slot in sorted(occurrences(text, patterns), key=lambda c: (-c[0], c[1], c[2])):
        if any(taken[start:start + length]):
            continue
        for i in range(start, start + length):
            taken[i] = True
        counts[slot] += 1
    return counts


def label(query: bytes, alpha, symbols):
    a = count(l1(query), [(n, k) for n, k, _ in alpha])
    s = count(l2(query), [(n, k) for n, k, _ in symbols])
    tiers = [t for (_, _, t), c in zip(alpha, a) if c]
    level = max(tiers) if tiers else 1
    trace = [f"base={level}"]
    for group in "ABC":
        present = [n for (n, _, g), c in zip(symbols, s) if g == group and c]
        if present and level < CEILING[group]:
            level += 1
            trace.append(f"{group}+1")
        elif present:
            trace.append(f"{group}@ceiling")
    return level, " ".join(trace)


def main():
    alpha, symbols = load_dict(sys.argv[1])
    for line in open(sys.argv[2], "rb"):
        line = line.rstrip(b"\n")
        query = unquote_to_bytes(line)
        level, trace = label(query, alpha, symbols)
        print(f"{quote_from_bytes(query, safe='')}\t{level}\t{trace}")


if __name__ == "__main__":
    main()
