#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc (included by src/unicode.cpp).

Category tables come from the `regex` module (the engine behind the
international mteval tokenizer), whitespace and lowercase mappings from the
Python runtime (`str.isspace`, `str.lower`), so the C++ side classifies code
points exactly like the reference scorers do.

    python3 tools/gen_unicode_tables.py > src/unicode_tables.inc
"""
import sys
import unicodedata

import regex

MAX_CP = 0x110000


def ranges(pred):
    out = []
    start = None
    for cp in range(MAX_CP):
        hit = pred(cp)
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def is_surrogate(cp):
    return 0xD800 <= cp <= 0xDFFF


def category_pred(pattern):
    rx = regex.compile(pattern)
    return lambda cp: not is_surrogate(cp) and rx.match(chr(cp)) is not None


def emit_ranges(name, rs):
    print(f"constexpr std::array<CodeRange, {len(rs)}> {name}{{{{")
    for lo, hi in rs:
        print(f"    {{0x{lo:X}, 0x{hi:X}}},")
    print("}};")
    print()


def main():
    print("// Generated by tools/gen_unicode_tables.py. Do not edit.")
    print(f"// regex {regex.__version__}, unicodedata {unicodedata.unidata_version}")
    print()
    emit_ranges("kPunctuation", ranges(category_pred(r"\p{P}")))
    emit_ranges("kSymbol", ranges(category_pred(r"\p{S}")))
    emit_ranges("kNumber", ranges(category_pred(r"\p{N}")))
    emit_ranges("kMark", ranges(category_pred(r"\p{M}")))
    emit_ranges("kWhitespace", ranges(lambda cp: not is_surrogate(cp) and chr(cp).isspace()))

    lower = []
    for cp in range(MAX_CP):
        if is_surrogate(cp):
            continue
        low = chr(cp).lower()
        if low != chr(cp):
            lower.append((cp, [ord(c) for c in low]))
    print(f"constexpr std::array<LowerMapping, {len(lower)}> kLowercase{{{{")
    for cp, seq in lower:
        padded = seq + [0] * (3 - len(seq))
        body = ", ".join(f"0x{c:X}" for c in padded)
        print(f"    {{0x{cp:X}, {len(seq)}, {{{body}}}}},")
    print("}};")


if __name__ == "__main__":
    sys.exit(main())
