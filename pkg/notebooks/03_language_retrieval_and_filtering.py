# %% [markdown]
# # Understanding what users type
#
# Novel utterances never reach the models directly. They are embedded,
# matched against the training exemplars, and the nearest exemplar's stored
# embedding is what conditions the decoder. The shipped table was built
# offline over the five tabletop tasks' corpus.

# %%
from langsteer import language as lang
from langsteer.assets import data_path

table = lang.load_embedding_table(str(data_path("embeddings_pretrained.json")))
labeled = lang.load_exemplar_file(str(data_path("utterances_buffet.json")))
exemplars = lang.build_exemplars(labeled, table)
print(f"{len(exemplars)} training exemplars across {len({e.task for e in exemplars})} tasks")

for query in [
    "yellow in purple",
    "bring basket to center of pan",
    "pick up the cup of marbles and pour them into the cereal bowl",
    "put the fruit where it belongs",
]:
    ex, sim_score = lang.retrieve_nearest(query, table, exemplars)
    print(f"  {query!r}\n    -> [{ex.task}] {ex.text!r}  (cos {sim_score:.3f})")

# %% [markdown]
# ## Filtering noisy annotators
#
# The corpus was crowdsource-style: 30 synthetic annotators, half of them
# writing spam or off-domain text. Scoring each annotator by distance from
# the leave-one-out consensus and dropping the worst 15 recovers the clean
# half exactly; the shipped training utterances are that filtered output.

# %%
corpus = lang.load_annotator_corpus(str(data_path("annotators_buffet.json")))
kept, scores = lang.filter_annotators(corpus, table, k=15)
print("kept:   ", kept)
print("dropped:", [a for a in corpus.annotators if a not in kept])
worst = max(scores, key=scores.get)
print(f"noisiest annotator {worst} (score {scores[worst]:.3f}) wrote, for example:")
print(" ", corpus.text(worst, corpus.tasks[0])[:90])
