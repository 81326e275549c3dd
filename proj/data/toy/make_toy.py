"""Regenerates the bundled toy dataset (stdlib only, fixed seed)."""
import csv
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
rng = random.Random(20240611)

N_SITES = 120
SPECIES = ["Aporcal", "Lumcas", "Lumter", "Octcya", "Allchl", "Dendoc", "Satmam", "Eisten"]
LANDCOVER = ["forest", "grassland", "cropland"]


def probit(eta):
    return 0.5 * math.erfc(-eta / math.sqrt(2.0))


sites = []
for i in range(N_SITES):
    x = rng.uniform(0.0, 100.0)
    y = rng.uniform(0.0, 100.0)
    temp = 8.0 + 0.08 * y + rng.gauss(0.0, 1.0)
    precip = 900.0 - 3.0 * y + 2.0 * x + rng.gauss(0.0, 60.0)
    seas = 30.0 + 0.1 * x + rng.gauss(0.0, 5.0)
    ph = rng.uniform(4.5, 8.0)
    lc = rng.choice(LANDCOVER)
    sites.append(dict(site_id=f"t{i + 1:03d}", x=x, y=y, temperature=temp, precipitation=precip,
                      precip_seasonality=seas, soil_ph=ph, landcover=lc))

# Standardized drivers and species responses.
def z(key):
    vals = [s[key] for s in sites]
    m = sum(vals) / len(vals)
    sd = math.sqrt(sum((v - m) ** 2 for v in vals) / len(vals))
    return [(v - m) / sd for v in vals]

zt, zp, zs, zph = z("temperature"), z("precipitation"), z("precip_seasonality"), z("soil_ph")
latent = [rng.gauss(0.0, 1.0) for _ in sites]
coef = {
    "Aporcal": (0.3, 0.8, 0.0, 0.5, {"forest": -0.5, "grassland": 0.6, "cropland": 0.2}, 0.6, 0.4),
    "Lumcas": (0.5, 0.6, 0.1, 0.0, {"forest": 0.4, "grassland": 0.2, "cropland": -0.4}, 0.5, 0.3),
    "Lumter": (-0.2, 0.9, 0.2, 0.3, {"forest": 0.0, "grassland": 0.5, "cropland": 0.0}, -0.5, 0.0),
    "Octcya": (0.0, -0.7, 0.3, 0.2, {"forest": 0.3, "grassland": 0.0, "cropland": -0.2}, 0.4, -0.2),
    "Allchl": (0.8, -0.5, 0.0, 0.4, {"forest": -0.3, "grassland": 0.4, "cropland": 0.3}, -0.6, -0.3),
    "Dendoc": (-0.6, 0.5, 0.4, -0.5, {"forest": 0.9, "grassland": -0.2, "cropland": -0.6}, -0.9, 0.5),
    "Satmam": (-0.4, 0.7, -0.2, -0.3, {"forest": 0.6, "grassland": 0.1, "cropland": -0.3}, -1.0, 0.5),
    "Eisten": (0.6, -0.8, 0.2, 0.6, {"forest": -0.4, "grassland": 0.0, "cropland": 0.5}, -1.3, -0.4),
}
community = []
for i, s in enumerate(sites):
    row = {"site_id": s["site_id"]}
    for name in SPECIES:
        bt, bp, bs, bph, blc, c, a = coef[name]
        eta = c + bt * zt[i] + bp * zp[i] + bs * zs[i] + bph * zph[i] + blc[s["landcover"]] + a * latent[i]
        row[name] = 1 if rng.random() < probit(eta) else 0
    community.append(row)

with open(HERE / "covariates.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["site_id", "temperature", "precipitation", "precip_seasonality", "soil_ph", "landcover"])
    for s in sites:
        w.writerow([s["site_id"], f"{s['temperature']:.3f}", f"{s['precipitation']:.1f}",
                    f"{s['precip_seasonality']:.2f}", f"{s['soil_ph']:.2f}", s["landcover"]])
with open(HERE / "community.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["site_id"] + SPECIES)
    for r in community:
        w.writerow([r["site_id"]] + [r[n] for n in SPECIES])
with open(HERE / "coordinates.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["site_id", "x", "y"])
    for s in sites:
        w.writerow([s["site_id"], f"{s['x']:.2f}", f"{s['y']:.2f}"])

# Evaluation subsets: the last 30 sites, with a presence-only variant.
with open(HERE / "eval.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["site_id"] + SPECIES)
    for r in community[-30:]:
        w.writerow([r["site_id"]] + [r[n] for n in SPECIES])

schema = {"columns": [
    {"name": "temperature", "kind": "numerical", "group": "temperature"},
    {"name": "precipitation", "kind": "numerical", "group": "precipitation"},
    {"name": "precip_seasonality", "kind": "numerical", "group": "precipitation"},
    {"name": "soil_ph", "kind": "numerical", "group": "soil"},
    {"name": "landcover", "kind": "categorical", "levels": LANDCOVER, "group": "landcover"},
]}
(HERE / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
