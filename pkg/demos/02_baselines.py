"""Popularity and Item-KNN on the held-out trips.

Run: python3 demos/02_baselines.py
"""
from reclab.baselines import ItemKNNRecommender, PopularityRecommender, fit_popularity, fit_similarity
from reclab.config import RunConfig
from reclab.evaluation import evaluate, leaderboard
from reclab.experiment import prepare_data

data = prepare_data(RunConfig())

pop = fit_popularity(data.train)
sim = fit_similarity(data.train, top_k=5)

# what the item index thinks of the busiest city
busiest = pop.global_ranking[0]
print(busiest, "->", [(c, round(s, 3)) for c, s in sim.neighbors(busiest)])

reports = [
    evaluate(PopularityRecommender(pop), data.test),
    evaluate(ItemKNNRecommender(sim, pop), data.test),
    evaluate(ItemKNNRecommender(sim, pop, exclude_visited=True), data.test, model_name="itemknn_novisited"),
]
text, _ = leaderboard(reports)
print(text)

# a few misses, to get a feel for the task
misses = [r for r in reports[1].records if not r.hit][:3]
for r in misses:
    print(f"{r.trip_id}: suggested {r.top}, truth {r.truth}")
