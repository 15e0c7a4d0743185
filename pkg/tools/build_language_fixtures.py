"""Build the shipped language fixtures.

Produces three files under src/langsteer/data/:

  annotators_buffet.json     30-annotator x 5-task synthetic annotation grid
  utterances_buffet.json     training utterances: the 15 consensus annotators'
                             texts, selected by the filtering algorithm itself
  embeddings_pretrained.json sentence-embedding table covering every grid
                             utterance plus the five held-out user queries

The embedding table stands in for the external pretrained sentence
encoder, which is not reachable from this environment. It is produced
offline by a small distributional pipeline: PPMI co-occurrence statistics
over the fixture corpus plus a paraphrase-rich glue corpus, factored with
an SVD into token vectors, mean-pooled per sentence and L2-normalized.
Same structure as the real pipeline (token embeddings -> mean pooling),
tiny scale. If sentence-transformers and its weights are available, pass
--backend sentence-transformers to build the table with the real encoder
instead.

Run from the repo root:  python tools/build_language_fixtures.py
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from langsteer.language import tokenize  # noqa: E402

TASKS = ["pick_banana", "pick_fruit_basket", "pick_cereal", "pour_bowl", "pour_cup"]

# The five held-out user queries with their intended tasks.
QUERIES = {
    "yellow in purple": "pick_banana",
    "bring basket to center of pan": "pick_fruit_basket",
    "go to the left side of the cream bowl, go down, grab the cereal bowl, and place it on the try": "pick_cereal",
    "pick up the cup of marbles and pour them into the cereal bowl": "pour_bowl",
    "pick up the clear cup with marbles in it and pour it in the black mug with the coffee beans in it": "pour_cup",
}

# 15 consensus annotators: one instruction per task each. a01's row holds the
# canonical exemplar strings.
CLEAN = {
    "a01": [
        "pick up the yellow banana and place it into the purple basket",
        "place the basket onto the tray",
        "grab the cereal bowl and put it on the tray",
        "pick and pour the cup of white balls into the bowl of cereal",
        "pick up the cup and pour the contents in the mug",
    ],
    "a02": [
        "put the banana in the purple fruit basket",
        "move the purple basket over to the serving tray",
        "pick up the green cereal bowl and set it on the tray",
        "pour the blue cup of marbles into the cereal bowl",
        "pour the blue cup into the black coffee mug",
    ],
    "a03": [
        "grab the yellow banana and drop it in the basket",
        "lift the fruit basket and put it down on the tray",
        "take the cereal bowl over to the tray",
        "empty the cup of white marbles into the green bowl",
        "empty the cup of marbles into the coffee mug",
    ],
    "a04": [
        "take the banana and place it inside the purple basket",
        "grab the purple basket by the handles and set it on the tray",
        "move the bowl of cereal onto the serving tray",
        "tip the cup of balls into the cereal bowl on the tray",
        "tip the cup over and pour the marbles into the mug",
    ],
    "a05": [
        "move the banana into the fruit basket",
        "pick the basket up and drop it on the tray",
        "place the green bowl on the tray",
        "pour the white balls from the blue cup into the bowl of cereal",
        "pour the marbles from the cup into the black mug",
    ],
    "a06": [
        "pick the banana up and put it in the basket of fruit",
        "bring the purple fruit basket to the tray",
        "lift the cereal bowl and place it on the tray",
        "dump the cup of marbles into the cereal bowl",
        "dump the marbles in the cup into the coffee cup",
    ],
    "a07": [
        "drop the yellow banana into the purple basket",
        "set the fruit basket down on the serving tray",
        "carry the green cereal bowl to the tray",
        "pour the cup of white balls into the green cereal bowl",
        "pour everything in the blue cup into the mug of coffee beans",
    ],
    "a08": [
        "put the yellow banana into the fruit basket",
        "take the basket of fruit and place it on the tray",
        "grab the bowl with cereal and move it to the tray",
        "pour the marbles in the blue cup into the bowl of cereal",
        "take the cup of marbles and pour it into the black coffee mug",
    ],
    "a09": [
        "place the banana in the purple basket",
        "move the basket with the fruit onto the tray",
        "set the cereal bowl down on the serving tray",
        "empty the blue cup of white balls into the cereal bowl",
        "pour the cup of white marbles into the mug",
    ],
    "a10": [
        "lift the banana and set it in the basket",
        "carry the purple basket over to the serving tray",
        "pick up the bowl of cereal and put it on the tray",
        "pick up the blue cup and pour the balls into the bowl",
        "lift the blue cup and empty it into the coffee mug",
    ],
    "a11": [
        "grab the yellow banana and place it in the fruit basket",
        "pick up the basket and move it to the tray",
        "take the green bowl of cereal to the tray",
        "pour the white marbles into the bowl of cereal",
        "pour the contents of the cup into the black mug",
    ],
    "a12": [
        "move the yellow banana over into the purple fruit basket",
        "put the fruit basket onto the serving tray",
        "place the bowl of cereal onto the tray",
        "tip the blue cup so the white balls fall into the cereal bowl",
        "tip the cup of marbles into the mug with the coffee beans",
    ],
    "a13": [
        "take the banana to the purple basket and drop it in",
        "lift the basket of fruit onto the tray",
        "carry the cereal bowl over and set it on the tray",
        "take the cup of white balls and pour them in the cereal bowl",
        "grab the blue cup and pour the marbles into the coffee cup",
    ],
    "a14": [
        "pick up the banana and drop it into the basket of fruit",
        "drop the purple basket onto the serving tray",
        "move the green cereal bowl over to the serving tray",
        "pour the blue cup of white marbles into the green bowl of cereal",
        "pour the white balls in the cup into the black coffee mug",
    ],
    "a15": [
        "set the yellow banana inside the purple basket",
        "place the purple fruit basket on the tray",
        "put the cereal bowl down on the tray",
        "empty the cup of balls into the bowl of cereal on the tray",
        "empty the marbles into the black mug of coffee beans",
    ],
}

# 15 noisy annotators: spam, off-domain text, and vague fragments, the kind
# of thing filtering is supposed to drop. n01 and n02 carry the two
# canonical spam strings.
NOISY = {
    "n01": [
        "move your arm outwards towards the left about 10 inches, lower your arm until you can't anymore then close your claw.",
        "swing the arm around to the right and then open the gripper wide",
        "rotate the joint forty five degrees and extend fully forward",
        "raise your elbow up then twist the wrist clockwise a little",
        "bring the arm back to the middle and press down slowly",
    ],
    "n02": [
        "the human the robot to take bowl",
        "robot arm doing thing with the objects",
        "the machine it grab and went over there",
        "robot do the pouring one more time again",
        "it puts at the place where it was",
    ],
    "n03": [
        "nice video thanks for sharing",
        "good robot very smart technology",
        "this is cool i like robots",
        "amazing demonstration of the future",
        "wow the arm moves so smooth",
    ],
    "n04": [
        "do the task",
        "complete the job shown",
        "do what the video shows",
        "repeat the demonstration",
        "perform the action again",
    ],
    "n05": [
        "move it",
        "grab that",
        "over there",
        "put it down",
        "pour now",
    ],
    "n06": [
        "asdf keyboard test hello",
        "lorem ipsum dolor sit amet",
        "testing one two three",
        "qwerty response goes here",
        "n a not applicable",
    ],
    "n07": [
        "the quick brown fox jumps over the lazy dog",
        "a stitch in time saves nine",
        "red sky at night sailors delight",
        "an apple a day keeps the doctor away",
        "every cloud has a silver lining",
    ],
    "n08": [
        "i cannot see the video it will not load",
        "the link appears to be broken on my browser",
        "please fix the player the screen is black",
        "video buffering forever cannot watch",
        "no sound on this clip at all",
    ],
    "n09": [
        "five dollars is not enough for this hit",
        "how many of these tasks are there",
        "will i get the bonus payment",
        "this survey is too long",
        "where do i click submit",
    ],
    "n10": [
        "left then down then squeeze then up",
        "forward forward stop back",
        "up down left right select",
        "go go stop turn wait",
        "slide twist clamp release",
    ],
    "n11": [
        "make dinner for the family",
        "clean the whole kitchen please",
        "wash all of the dishes",
        "cook some breakfast eggs",
        "set the dining table for four",
    ],
    "n12": [
        "banana",
        "basket",
        "bowl",
        "cup",
        "mug",
    ],
    "n13": [
        "the arm motor spins at around sixty rpm i think",
        "looks like a six axis industrial manipulator",
        "the servo torque must be quite high",
        "what controller board does this robot use",
        "is the gripper pneumatic or electric",
    ],
    "n14": [
        "tell the robot what you want",
        "give an instruction to the machine",
        "type a command for the arm",
        "say what it should do next",
        "provide your input in the box",
    ],
    "n15": [
        "zzz not sure what this is",
        "maybe something with food",
        "hard to tell from here honestly",
        "could be anything really",
        "no idea skip this one",
    ],
}

# Paraphrase-style glue sentences: only used to enrich the co-occurrence
# statistics the token vectors are factored from (the stand-in's
# "pretraining corpus"). Never shipped as utterances.
GLUE = [
    "the yellow banana is a fruit",
    "a banana is yellow fruit you can eat",
    "the purple basket is a fruit basket",
    "a basket holds fruit like a banana",
    "the tray is a flat pan for serving",
    "set the pan down like a tray",
    "a serving tray looks like a shallow pan",
    "bring the pan to the center of the table",
    "the center of the tray is its middle",
    "the green bowl is full of cereal",
    "cereal goes in a green bowl with milk",
    "cream and milk go with cereal in a bowl",
    "the cream bowl sits to the left of the tray",
    "the blue cup holds white marbles",
    "marbles are small white balls",
    "the white balls are marbles standing in for milk",
    "a clear cup can hold marbles or milk",
    "the black mug holds coffee beans",
    "a mug is a cup for coffee",
    "coffee beans sit in the black coffee cup",
    "pour means to tip and empty a cup",
    "to empty a cup you tip it and pour",
    "dump and pour both empty the contents",
    "pick up grab and take mean the same thing",
    "place put and set down mean the same thing",
    "move carry and bring an object somewhere",
    "drop the object to release it inside",
    "go to the left side means move left",
    "go down means lower toward the table",
    "the robot arm can grab objects with its gripper",
]


def corpus_sentences() -> list[str]:
    out = []
    for row in CLEAN.values():
        out.extend(row)
    for row in NOISY.values():
        out.extend(row)
    out.extend(QUERIES.keys())
    out.extend(GLUE)
    return out


def build_distributional_table(sentences: list[str], texts_to_embed: list[str],
                               dim: int = 256, window: int = 3,
                               seed: int = 0) -> dict[str, list[float]]:
    """PPMI + SVD token vectors, mean-pooled per sentence."""
    tokenized = [tokenize(s) for s in sentences]
    vocab = sorted({t for toks in tokenized for t in toks})
    index = {t: i for i, t in enumerate(vocab)}
    v = len(vocab)
    counts = np.zeros((v, v))
    for toks in tokenized:
        for i, t in enumerate(toks):
            for j in range(max(0, i - window), min(len(toks), i + window + 1)):
                if i != j:
                    counts[index[t], index[toks[j]]] += 1.0
    total = counts.sum()
    row = counts.sum(axis=1, keepdims=True)
    col = counts.sum(axis=0, keepdims=True) ** 0.75
    col = col / col.sum() * total
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * col))
    ppmi = np.where(np.isfinite(pmi) & (pmi > 0), pmi, 0.0)
    k = min(dim, v)
    u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
    token_vecs = u[:, :k] * np.sqrt(s[:k])[None, :]
    if k < dim:
        token_vecs = np.pad(token_vecs, ((0, 0), (0, dim - k)))

    table = {}
    for text in texts_to_embed:
        toks = [t for t in tokenize(text) if t in index]
        if not toks:
            vec = np.zeros(dim)
        else:
            vec = np.mean([token_vecs[index[t]] for t in toks], axis=0)
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec = vec / norm
        table[text] = [round(float(x), 8) for x in vec]
    return table


def build_sentence_transformers_table(texts_to_embed: list[str]) -> dict[str, list[float]]:
    from sentence_transformers import SentenceTransformer

    model = SentenceTransformer("sentence-transformers/paraphrase-distilroberta-base-v1")
    vecs = model.encode(texts_to_embed, normalize_embeddings=True)
    return {t: [float(x) for x in v] for t, v in zip(texts_to_embed, vecs)}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--backend", choices=["distributional", "sentence-transformers"],
                        default="distributional")
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--outdir", default=str(Path(__file__).resolve().parent.parent
                                                / "src" / "langsteer" / "data"))
    args = parser.parse_args()
    outdir = Path(args.outdir)

    annotators = sorted(CLEAN) + sorted(NOISY)
    grid = {a: {t: CLEAN.get(a, NOISY.get(a))[i] for i, t in enumerate(TASKS)}
            for a in annotators}
    with open(outdir / "annotators_buffet.json", "w") as f:
        json.dump({"schema": "annotator-corpus/1", "annotators": annotators,
                   "tasks": TASKS, "utterances": grid}, f, indent=1)

    texts = sorted({grid[a][t] for a in annotators for t in TASKS} | set(QUERIES))
    if args.backend == "distributional":
        table = build_distributional_table(corpus_sentences(), texts, dim=args.dim)
    else:
        table = build_sentence_transformers_table(texts)
    with open(outdir / "embeddings_pretrained.json", "w") as f:
        json.dump({"schema": "embedding-table/1", "dim": args.dim,
                   "provenance": "pretrained_fixture",
                   "backend": args.backend,
                   "entries": [{"text": t, "vector": table[t]} for t in texts]}, f)

    # training utterances = whatever the filtering algorithm keeps at K=15
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
    from langsteer.language import (AnnotatorCorpus, filter_annotators,
                                    load_embedding_table, save_exemplar_file)

    corpus = AnnotatorCorpus(annotators=tuple(annotators), tasks=tuple(TASKS),
                             utterances=grid)
    emb_table = load_embedding_table(str(outdir / "embeddings_pretrained.json"))
    kept, scores = filter_annotators(corpus, emb_table, k=15)
    labeled = [(t, grid[a][t]) for t in TASKS for a in kept]
    save_exemplar_file(str(outdir / "utterances_buffet.json"), labeled)

    dropped = [a for a in annotators if a not in kept]
    print(f"kept annotators: {kept}")
    print(f"dropped: {dropped}")
    clean_dropped = [a for a in dropped if a in CLEAN]
    print(f"clean annotators wrongly dropped: {clean_dropped or 'none'}")
    print(f"wrote {len(texts)} embeddings at dim {args.dim}")


if __name__ == "__main__":
    main()
