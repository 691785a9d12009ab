#!/usr/bin/env python3
"""Regenerates include/evcap/unicode_tables.hpp.

Emits sorted codepoint ranges for the Unicode punctuation categories (P*)
and the separator categories (Z*), taken from Python's unicodedata.
"""
import sys
import unicodedata


def ranges_for(prefixes):
    points = [cp for cp in range(0x110000)
              if unicodedata.category(chr(cp))[0] in prefixes]
    out = []
    for cp in points:
        if out and cp == out[-1][1] + 1:
            out[-1][1] = cp
        else:
            out.append([cp, cp])
    return out


def emit(name, rngs, f):
    f.write(f"inline constexpr CodepointRange {name}[] = {{\n")
    for lo, hi in rngs:
        f.write(f"    {{0x{lo:04X}, 0x{hi:04X}}},\n")
    f.write("};\n\n")


def main():
    punct = ranges_for({"P"})
    space = ranges_for({"Z"})
    path = sys.argv[1] if len(sys.argv) > 1 else "include/evcap/unicode_tables.hpp"
    with open(path, "w") as f:
        f.write("// Generated by scripts/gen_unicode_tables.py; do not edit by hand.\n")
        f.write("#pragma once\n\n")
        f.write("#include <cstdint>\n\n")
        f.write("namespace evcap::detail {\n\n")
        f.write("struct CodepointRange {\n    uint32_t lo;\n    uint32_t hi;\n};\n\n")
        emit("kPunctRanges", punct, f)
        emit("kSpaceRanges", space, f)
        f.write("} // namespace evcap::detail\n")
    print(f"wrote {path}: {len(punct)} punct ranges, {len(space)} space ranges")


if __name__ == "__main__":
    main()
