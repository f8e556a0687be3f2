"""Train the base model and the full hybrid on the default world and compare.

A few epochs keep this to minutes on one CPU core; the acceptance suite
runs the same thing across three seeds.

Run: python3 demos/03_train_and_compare.py [max_epochs]
"""
import dataclasses
import logging
import sys

from reclab.config import RunConfig
from reclab.evaluation import leaderboard
from reclab.experiment import prepare_data, run_comparison

logging.basicConfig(level=logging.INFO, format="%(message)s")

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 4
cfg = RunConfig()
cfg = dataclasses.replace(cfg, training=dataclasses.replace(cfg.training, max_epochs=epochs, early_stop_patience=3))

data = prepare_data(cfg)
reports, runs = run_comparison(cfg, ("popularity", "itemknn", "narm", "narm_v2"), data)
print(leaderboard(reports)[0])

# where the hybrid looks: NARM attention over one test trip
v2 = runs["narm_v2"]
trip = data.test.trips[0]
batch = v2.pipeline.collate(v2.pipeline.query_samples([trip.head(len(trip) - 1)]))
rep = v2.trained.model.represent(batch)
print("visible:", trip.cities[:-1], "truth:", trip.cities[-1])
print("attention:", [round(a, 3) for a in rep.attention[0, :len(trip) - 1].tolist()])
print("top-4:", [v2.pipeline.vocab.id_to_city[int(i)] for i in v2.trained.model.top_k(batch, 4)[0]])
