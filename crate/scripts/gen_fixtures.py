#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under crates/core/fixtures.

Output is a pure function of the seeds below, so rerunning this script
leaves the checked-in files unchanged.
"""

import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "crates" / "core" / "fixtures"
PARADIGMS = ROOT / "crates" / "core" / "data" / "default_paradigms.tsv"

CONSONANTS = "ක ග ච ජ ට ඩ ත ද න ප බ ම ය ර ල ව ස හ".split()
VOWEL_SIGNS = ["", "ි", "ු", "ෙ", "ො"]

ENGLISH_NOUNS = """farmer teacher doctor driver soldier singer dancer writer painter baker
tailor fisher hunter porter guard clerk judge priest monk king queen nurse cook potter weaver
barber builder carpenter merchant sailor pilot student lawyer minister officer engineer artist
actor uncle aunt elder owner umpire inspector editor author envoy orphan infant heir boy girl
man woman brother sister friend neighbour guest servant shepherd miner jeweller banker broker
ranger rider trader chief mayor""".split()

SYNONYMS = {
    "farmer": "cultivator", "teacher": "tutor", "doctor": "physician", "driver": "chauffeur",
    "soldier": "warrior", "singer": "vocalist", "writer": "scribe", "judge": "magistrate",
    "king": "monarch", "cook": "chef", "merchant": "vendor", "student": "pupil",
    "lawyer": "attorney", "officer": "official", "artist": "creator", "friend": "companion",
    "guard": "sentry", "sailor": "mariner", "builder": "mason", "trader": "dealer",
}

# (si words around the noun, en words around the noun phrase); N and E mark the slots
FRAMES = {
    "nominative": [("N ආවා .", "E came ."), ("N ගියා .", "E went .")],
    "accusative": [("මම N දැක්කා .", "I saw E ."), ("අපි N හෙව්වා .", "we searched for E .")],
    "dative": [("මම N කතා කළා .", "I spoke E ."), ("ඔහු N ලියුවා .", "he wrote E .")],
    "genitive": [("N ගෙදර ලොකුයි .", "E house is big ."), ("N පොත අලුත් .", "E book is new .")],
    "instrumental": [("මම N ඇහුවා .", "I asked E ."), ("ඇය N ඉගෙන ගත්තා .", "she learned E .")],
}


def load_paradigms():
    rules = {}
    for line in PARADIGMS.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        pid, _suffix, case, definiteness, strip, add, template = line.split("\t")
        strip = "" if strip == "-" else strip
        add = "" if add == "-" else add
        rules[(pid, case, definiteness)] = (strip, add, template)
    return rules


RULES = load_paradigms()


def article(word):
    return "an" if word[0] in "aeiou" else "a"


def inflect(noun, cls, case, definiteness):
    strip, add, template = RULES[(cls, case, definiteness)]
    si, en = noun
    stem = si[: len(si) - len(strip)] if strip else si
    target = template.replace("{a}", article(en)).replace("{w}", en)
    return stem + add, target


def make_nouns(rng, count):
    seen = set()
    nouns = []
    english = ENGLISH_NOUNS[:]
    for i in range(count):
        cls = "masculine" if i % 2 == 0 else "feminine"
        while True:
            syl = "".join(rng.choice(CONSONANTS) + rng.choice(VOWEL_SIGNS) for _ in range(2))
            word = syl + rng.choice(CONSONANTS) + ("ා" if cls == "masculine" else "")
            if word not in seen:
                seen.add(word)
                break
        nouns.append(((word, english[i]), cls))
    return nouns


def sentence(rng, noun, cls, case=None, definiteness=None):
    case = case or rng.choice(list(FRAMES))
    definiteness = definiteness or rng.choice(["definite", "indefinite"])
    form, phrase = inflect(noun, cls, case, definiteness)
    si, en = rng.choice(FRAMES[case])
    si = si.replace("N", form)
    en = en.replace("E", phrase)
    return si, en[0].upper() + en[1:]


def write(path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def write_corpus(base, name, pairs):
    write(base / f"{name}.si", [p[0] for p in pairs])
    write(base / f"{name}.en", [p[1] for p in pairs])


def config(base, name, exp_id, lists, extra=""):
    text = f"""[experiment]
id = {exp_id}
direction = si-en
seed = 7

[data]
train.si = corpus/train.si
train.en = corpus/train.en
dev.si = corpus/dev.si
dev.en = corpus/dev.en
test.si = corpus/test.si
test.en = corpus/test.en

[tune]
nbest = 20
iterations = 3
restarts = 2

[decode]
stack_size = 30
{extra}"""
    for lname, opts in lists:
        text += f"\n[list:{lname}]\n" + "".join(f"{k} = {v}\n" for k, v in opts)
    write(base / name, text.rstrip("\n").splitlines())


def lexicon_line(noun, cls, target=None):
    (si, en) = noun
    return f"{si}\t{target or en}\tdictionary\tnoun,{cls}"


def training_pairs(rng, nouns, n):
    pairs = []
    cells = [(c, d) for c in FRAMES for d in ("definite", "indefinite")]
    # every noun gets its base form once, then random cells
    for noun, cls in nouns:
        pairs.append(sentence(rng, noun, cls, "nominative", "definite"))
    while len(pairs) < n:
        noun, cls = rng.choice(nouns)
        c, d = rng.choice(cells)
        pairs.append(sentence(rng, noun, cls, c, d))
    rng.shuffle(pairs)
    return pairs


def inflection_fixture():
    rng = random.Random(20240611)
    base = FIX / "inflection"
    nouns = make_nouns(rng, 70)
    corpus_nouns, unseen = nouns[:40], nouns[40:]
    train = training_pairs(rng, corpus_nouns, 200)
    dev = [sentence(rng, *rng.choice(corpus_nouns)) for _ in range(20)]
    lexicon = corpus_nouns[:20] + unseen
    test = []
    for i, (noun, cls) in enumerate(unseen):
        # base forms for a third of the unseen nouns, inflected forms otherwise
        if i % 3 == 0:
            test.append(sentence(rng, noun, cls, "nominative", "definite"))
        else:
            test.append(sentence(rng, noun, cls))
    while len(test) < 50:
        test.append(sentence(rng, *rng.choice(unseen)))
    rng.shuffle(test)
    write_corpus(base / "corpus", "train", train)
    write_corpus(base / "corpus", "dev", dev)
    write_corpus(base / "corpus", "test", test)
    write(base / "lists" / "dictionary.tsv", [lexicon_line(n, c) for n, c in lexicon])
    config(base, "baseline.ini", "A1", [])
    config(base, "dictionary.ini", "A2", [("dictionary", [("path", "lists/dictionary.tsv")])])
    config(
        base,
        "augmented.ini",
        "A3",
        [("dictionary", [("path", "lists/dictionary.tsv"), ("augment", "true")])],
    )


def filtration_fixture():
    rng = random.Random(99)
    base = FIX / "filtration"
    nouns = make_nouns(rng, 50)
    corpus_nouns, unseen = nouns[:40], nouns[40:]
    train = training_pairs(rng, corpus_nouns, 200)
    dev = [sentence(rng, *rng.choice(corpus_nouns)) for _ in range(20)]
    conflicting = [(n, c) for n, c in corpus_nouns if n[1] in SYNONYMS][:16]
    entries = [lexicon_line(n, c, SYNONYMS[n[1]]) for n, c in conflicting]
    entries += [lexicon_line(n, c) for n, c in unseen[:8]]
    test = [sentence(rng, n, c, "nominative", "definite") for n, c in unseen[:8]]
    test += [sentence(rng, n, c) for n, c in conflicting]
    while len(test) < 40:
        test.append(sentence(rng, *rng.choice(corpus_nouns)))
    rng.shuffle(test)
    write_corpus(base / "corpus", "train", train)
    write_corpus(base / "corpus", "dev", dev)
    write_corpus(base / "corpus", "test", test)
    write(base / "lists" / "terms.tsv", entries)
    config(base, "unfiltered.ini", "A6", [("terms", [("path", "lists/terms.tsv"), ("filter", "off")])])
    config(base, "filtered.ini", "A7", [("terms", [("path", "lists/terms.tsv"), ("filter", "token")])])


def glossary_fixture():
    base = FIX / "glossary"
    train = [
        ("ඉඩම් ප්‍රතිසංස්කරණ කොමිෂන් සභාව", "Land Reform Commission"),
        ("ඉඩම් ප්‍රතිසංස්කරණ", "land reform"),
        ("ඉඩම් ප්‍රතිසංස්කරණ පනත", "the land reform act"),
        ("ඉඩම් අයිතිය", "land ownership"),
        ("ඉඩම් ලියාපදිංචිය", "land registration"),
        ("කොමිෂන් සභාව", "the Commission"),
        ("කොමිෂන් සභාව රැස්විය", "the Commission met"),
        ("ප්‍රතිසංස්කරණ වැඩසටහන", "the reform programme"),
        ("අධ්‍යාපන ප්‍රතිසංස්කරණ", "education reform"),
        ("මැතිවරණ කොමිෂන් සභාව", "the Election Commission"),
        ("ඉඩම් කොමසාරිස්", "land commissioner"),
        ("සභාව රැස්විය", "the council met"),
    ]
    write_corpus(base / "corpus", "train", train)
    write_corpus(base / "corpus", "dev", train[:3])
    write_corpus(
        base / "corpus",
        "test",
        [("ඉඩම් ප්‍රතිසංස්කරණ කොමිෂන් සභාවෙන්", "from the Land Reform Commission")],
    )
    write(
        base / "lists" / "glossary.tsv",
        ["ඉඩම් ප්‍රතිසංස්කරණ කොමිෂන් සභාව\tLand Reform Commission\tglossary\tinanimate"],
    )
    for name, lists in [
        ("baseline.ini", []),
        ("glossary.ini", [("glossary", [("path", "lists/glossary.tsv"), ("augment", "true")])]),
    ]:
        config(base, name, name.split(".")[0], lists)
        path = base / name
        text = path.read_text(encoding="utf-8")
        text = text.replace("nbest = 20\niterations = 3\nrestarts = 2", "enabled = false")
        path.write_text(text, encoding="utf-8")


if __name__ == "__main__":
    inflection_fixture()
    filtration_fixture()
    glossary_fixture()
