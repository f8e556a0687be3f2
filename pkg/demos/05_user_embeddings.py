"""Autoencode user statistics to 100-D and look at them in 2-D.

Writes user_embeddings.png and user_embeddings.coords.csv in the working directory.

Run: python3 demos/05_user_embeddings.py
"""
from reclab import features as fx
from reclab.evaluation import export_embedding_plot
from reclab.experiment import user_profiles
from reclab.synthetic import SyntheticConfig, generate_synthetic

ds = generate_synthetic(SyntheticConfig(n_users=1500, n_trips=6000), seed=13)
users, rows, months = user_profiles(ds.trips)
print(f"{len(users)} users x {rows.shape[1]} statistics")
print("columns:", fx.column_names(fx.USER_COLUMNS)[:8], "...")

norm = fx.fit_normalizer(rows)
x = fx.apply_normalizer(norm, rows)
enc = fx.train_user_autoencoder(x, seed=0, epochs=300)
print(f"held-out reconstruction MSE {enc.heldout_mse:.4f} vs column-mean baseline {enc.baseline_mse:.4f}")

z = enc.encode(x)
coords = export_embedding_plot(z, months, "user_embeddings.png", seed=0)
print("embedding", z.shape, "-> t-SNE", coords.shape)
