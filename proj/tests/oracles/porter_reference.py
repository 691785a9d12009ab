#!/usr/bin/env python3
"""Reference Porter stemmer (original 1980 algorithm), used as an
independent oracle for the C++ stemmer. Run with words as arguments or
pipe a word list to stdin; prints `word<TAB>stem` lines."""
import sys

VOWELS = "aeiou"


def is_consonant(w, i):
    c = w[i]
    if c in VOWELS:
        return False
    if c == "y":
        return i == 0 or not is_consonant(w, i - 1)
    return True


def measure(w):
    # counts VC sequences in [C](VC)^m[V]
    m = 0
    prev_vowel = False
    for i in range(len(w)):
        v = not is_consonant(w, i)
        if prev_vowel and not v:
            m += 1
        prev_vowel = v
    return m


def has_vowel(w):
    return any(not is_consonant(w, i) for i in range(len(w)))


def ends_double_consonant(w):
    return (len(w) >= 2 and w[-1] == w[-2] and is_consonant(w, len(w) - 1))


def ends_cvc(w):
    if len(w) < 3:
        return False
    if not (is_consonant(w, len(w) - 3)
            and not is_consonant(w, len(w) - 2)
            and is_consonant(w, len(w) - 1)):
        return False
    return w[-1] not in "wxy"


def replace_longest(w, rules, cond):
    """rules: list of (suffix, replacement). Tries only the longest
    matching suffix; applies it if cond(stem) holds."""
    best = None
    for suf, rep in rules:
        if w.endswith(suf) and (best is None or len(suf) > len(best[0])):
            best = (suf, rep)
    if best is None:
        return w, False
    stem = w[: len(w) - len(best[0])]
    if cond(stem):
        return stem + best[1], True
    return w, True  # matched but condition failed; stop searching


def stem(word):
    w = word.lower()
    if len(w) <= 2:
        return w

    # step 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif w.endswith("ss"):
        pass
    elif w.endswith("s"):
        w = w[:-1]

    # step 1b
    did_1b = False
    if w.endswith("eed"):
        if measure(w[:-3]) > 0:
            w = w[:-1]
    elif w.endswith("ed") and has_vowel(w[:-2]):
        w = w[:-2]
        did_1b = True
    elif w.endswith("ing") and has_vowel(w[:-3]):
        w = w[:-3]
        did_1b = True
    if did_1b:
        if w.endswith(("at", "bl", "iz")):
            w += "e"
        elif ends_double_consonant(w) and w[-1] not in "lsz":
            w = w[:-1]
        elif measure(w) == 1 and ends_cvc(w):
            w += "e"

    # step 1c
    if w.endswith("y") and has_vowel(w[:-1]):
        w = w[:-1] + "i"

    # step 2
    step2 = [("ational", "ate"), ("tional", "tion"), ("enci", "ence"),
             ("anci", "ance"), ("izer", "ize"), ("abli", "able"),
             ("alli", "al"), ("entli", "ent"), ("eli", "e"),
             ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
             ("ator", "ate"), ("alism", "al"), ("iveness", "ive"),
             ("fulness", "ful"), ("ousness", "ous"), ("aliti", "al"),
             ("iviti", "ive"), ("biliti", "ble")]
    w, _ = replace_longest(w, step2, lambda s: measure(s) > 0)

    # step 3
    step3 = [("icate", "ic"), ("ative", ""), ("alize", "al"),
             ("iciti", "ic"), ("ical", "ic"), ("ful", ""), ("ness", "")]
    w, _ = replace_longest(w, step3, lambda s: measure(s) > 0)

    # step 4
    step4 = [("al", ""), ("ance", ""), ("ence", ""), ("er", ""),
             ("ic", ""), ("able", ""), ("ible", ""), ("ant", ""),
             ("ement", ""), ("ment", ""), ("ent", ""), ("ou", ""),
             ("ism", ""), ("ate", ""), ("iti", ""), ("ous", ""),
             ("ive", ""), ("ize", "")]
    best = None
    for suf, rep in step4:
        if w.endswith(suf) and (best is None or len(suf) > len(best[0])):
            best = (suf, rep)
    if w.endswith("ion") and (best is None or len("ion") > len(best[0])):
        stem_ion = w[:-3]
        if measure(stem_ion) > 1 and stem_ion and stem_ion[-1] in "st":
            w = stem_ion
        best = ("ion-handled", "")
    elif best is not None:
        s = w[: len(w) - len(best[0])]
        if measure(s) > 1:
            w = s

    # step 5a
    if w.endswith("e"):
        s = w[:-1]
        m = measure(s)
        if m > 1 or (m == 1 and not ends_cvc(s)):
            w = s

    # step 5b
    if measure(w) > 1 and ends_double_consonant(w) and w.endswith("l"):
        w = w[:-1]

    return w


def main():
    words = sys.argv[1:]
    if not words:
        words = [ln.strip() for ln in sys.stdin if ln.strip()]
    for word in words:
        print(f"{word}\t{stem(word)}")


if __name__ == "__main__":
    main()
