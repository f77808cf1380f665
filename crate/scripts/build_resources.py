#!/usr/bin/env python3
"""Rebuild the bundled lexicon, antonym and embedding files under data/.

Inputs are the unpacked npm packages (``npm pack <name> && tar xzf``):

  opinion-lexicon@0.0.2          Hu & Liu opinion lexicon word lists
  wordnet-db@3.1.14              WordNet 3.1 database files
  wink-embeddings-sg-100d@1.1.0  GloVe 6B 100-d vectors (PDDL)

Usage: build_resources.py OPINION_PKG WORDNET_PKG EMBEDDINGS_PKG [--top N]
"""
import argparse
import json
import os
import re
from collections import defaultdict

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def js_word_list(path):
    src = open(path, encoding="latin-1").read()
    header = src[src.index("/*") + 2 : src.index("*/")].strip("\n")
    body = src[src.index("module.exports") :]
    words = re.findall(r"'((?:[^'\\]|\\.)*)'", body)
    return header, [w.replace("\\'", "'") for w in words]


def write_lexicon(opinion_pkg):
    out = {}
    # The upstream package swapped the headers of its two files; the
    # word lists themselves are correct.
    for name, js in (("positive", "positiveWords.js"), ("negative", "negativeWords.js")):
        header, words = js_word_list(os.path.join(opinion_pkg, "lib", js))
        header = re.sub(r"Opinion Lexicon: \w+", "Opinion Lexicon: " + name.capitalize(), header)
        header = re.sub(r"list of \w+ opinion words", "list of %s opinion words" % name.upper(), header)
        path = os.path.join(DATA, "lexicon", "%s-words.txt" % name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(header.rstrip() + "\n\n")
            for w in words:
                f.write(w + "\n")
        out[name] = {w.lower() for w in words}
    return out


def parse_wordnet(dict_dir):
    """Returns (direct antonym pairs, indirect pairs) as word -> ordered list."""
    synsets = {}
    for pos in ("adj", "adv", "noun", "verb"):
        with open(os.path.join(dict_dir, "data." + pos), encoding="latin-1") as f:
            for line in f:
                if line.startswith("  "):
                    continue
                fields = line.split(" | ")[0].split()
                offset, ss_type = fields[0], fields[2]
                n_words = int(fields[3], 16)
                words = [fields[4 + 2 * i] for i in range(n_words)]
                i = 4 + 2 * n_words
                n_ptr = int(fields[i])
                ptrs = []
                for p in range(n_ptr):
                    sym, off, ppos, st = fields[i + 1 + 4 * p : i + 5 + 4 * p]
                    ptrs.append((sym, off, ppos, st))
                synsets[(pos, offset)] = (ss_type, words, ptrs)

    def clean(w):
        w = re.sub(r"\(.*\)$", "", w).lower()
        return None if "_" in w else w

    pos_key = {"a": "adj", "s": "adj", "r": "adv", "n": "noun", "v": "verb"}
    direct = defaultdict(list)
    for (pos, off), (ss_type, words, ptrs) in synsets.items():
        for sym, toff, tpos, st in ptrs:
            if sym != "!":
                continue
            src, tgt = int(st[:2], 16), int(st[2:], 16)
            target = synsets.get((pos_key[tpos], toff))
            if target is None:
                continue
            a, b = clean(words[src - 1]), clean(target[1][tgt - 1])
            if a and b and b not in direct[a]:
                direct[a].append(b)

    # Satellite adjectives inherit the antonyms of their head adjective.
    indirect = defaultdict(list)
    for (pos, off), (ss_type, words, ptrs) in synsets.items():
        if ss_type != "s":
            continue
        for sym, toff, tpos, _ in ptrs:
            if sym != "&":
                continue
            head = synsets.get(("adj", toff))
            if head is None:
                continue
            for hsym, hoff, hpos, _ in head[2]:
                if hsym != "!":
                    continue
                anti = synsets.get((pos_key[hpos], hoff))
                if anti is None:
                    continue
                for w in words:
                    w = clean(w)
                    if not w:
                        continue
                    for b in anti[1]:
                        b = clean(b)
                        if b and b not in indirect[w]:
                            indirect[w].append(b)
    return direct, indirect


def write_antonyms(lex, wordnet_pkg, rank):
    direct, indirect = parse_wordnet(os.path.join(wordnet_pkg, "dict"))
    pos, neg = lex["positive"], lex["negative"]
    lexicon = pos | neg

    def opposite(w):
        return neg if w in pos else pos

    def pick(w, options):
        opts = [b for b in options if b != w]
        if not opts:
            return None
        crossing = [b for b in opts if b in opposite(w)]
        pool = crossing or [b for b in opts if b not in lexicon]
        if not pool:
            return None
        return min(pool, key=lambda b: (rank.get(b, 10**9), b))

    pairs = {}
    for w in sorted(lexicon):
        if w in pos and w in neg:
            continue
        choice = pick(w, direct.get(w, [])) or pick(w, indirect.get(w, []))
        if choice:
            pairs[w] = choice
    path = os.path.join(DATA, "lexicon", "antonyms.txt")
    with open(path, "w", encoding="utf-8") as f:
        f.write(";; Antonym map for opinion-lexicon words, one \"word antonym\" pair per line.\n")
        f.write(";; Derived from WordNet 3.1 direct antonyms, falling back to the head-adjective\n")
        f.write(";; antonyms of satellite adjectives. WordNet is (c) Princeton University; see\n")
        f.write(";; data/README.md for the license.\n")
        for w in sorted(pairs):
            f.write("%s %s\n" % (w, pairs[w]))
    return pairs


def write_embeddings(emb_pkg, lex, extra, top):
    d = json.load(open(os.path.join(emb_pkg, "wink-embeddings-sg-100d.json")))
    dims = d["dimensions"]
    words = d["words"]
    vectors = d["vectors"]
    keep = []
    seen = set()
    wanted = lex["positive"] | lex["negative"] | extra
    for i, w in enumerate(words):
        if i < top or w in wanted:
            if w not in seen and w in vectors and " " not in w:
                keep.append(w)
                seen.add(w)
    path = os.path.join(DATA, "embeddings", "glove-6b-100d-subset.txt")
    with open(path, "w", encoding="utf-8") as f:
        for w in keep:
            vec = vectors[w][:dims]
            f.write(w + " " + " ".join("%.4f" % x for x in vec) + "\n")
    return {w: i for i, w in enumerate(words)}, len(keep)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("opinion_pkg")
    ap.add_argument("wordnet_pkg")
    ap.add_argument("embeddings_pkg")
    ap.add_argument("--top", type=int, default=10000)
    ap.add_argument("--extra", help="file with extra words to keep in the embedding subset")
    args = ap.parse_args()

    lex = write_lexicon(args.opinion_pkg)
    extra = set()
    if args.extra:
        extra = {l.strip().lower() for l in open(args.extra) if l.strip()}
    rank, n = write_embeddings(args.embeddings_pkg, lex, extra, args.top)
    pairs = write_antonyms(lex, args.wordnet_pkg, rank)
    print("lexicon: %d positive, %d negative" % (len(lex["positive"]), len(lex["negative"])))
    print("antonyms: %d pairs" % len(pairs))
    print("embeddings: %d words" % n)


if __name__ == "__main__":
    main()
