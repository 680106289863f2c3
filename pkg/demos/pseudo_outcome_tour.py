"""Tour of the pseudo-outcome constructions on a synthetic draw.

Each signal D is built so that E[D | X = x] equals the target
functional at x when the plugged-in nuisances are the truth.  This
script draws a large sample at a single covariate value and checks the
conditional means by brute force, including a transformed target (the
odds ratio) assembled from its partial derivatives.
"""

import numpy as np

from pseudolearn.pseudo import (
    aipw_pseudo,
    ht_pseudo,
    mar_pseudo,
    odds_ratio_partials,
    odds_ratio_value,
    rr_pseudo,
    transform_pseudo,
)

N = 400_000
PI = 0.3          # treatment probability at this x
MU0, MU1 = 0.4, 0.65   # arm success probabilities (binary outcome)

rng = np.random.default_rng(7)
w = (rng.uniform(size=N) < PI).astype(float)
y = (rng.uniform(size=N) < np.where(w == 1.0, MU1, MU0)).astype(float)

print(f"single x, pi={PI}, mu0={MU0}, mu1={MU1}, n={N}\n")

rows = [
    ("difference (AIPW)", aipw_pseudo(y, w, PI, MU0, MU1), MU1 - MU0),
    ("difference (HT) ", ht_pseudo(y, w, PI), MU1 - MU0),
    ("risk ratio       ", rr_pseudo(y, w, PI, MU0, MU1), MU1 / MU0),
    (
        "odds ratio       ",
        transform_pseudo(
            y, w, PI, MU0, MU1,
            df_dmu0=lambda m0, m1: odds_ratio_partials(m0, m1)[0],
            df_dmu1=lambda m0, m1: odds_ratio_partials(m0, m1)[1],
            f=odds_ratio_value,
        ),
        odds_ratio_value(MU0, MU1),
    ),
]

# missing-data mean: a=1 marks an observed outcome
a = (rng.uniform(size=N) < PI).astype(float)
ym = (rng.uniform(size=N) < MU0).astype(float)
rows.append(("missing-data mean", mar_pseudo(ym, a, PI, MU0), MU0))

print(f"{'signal':<18} {'mean(D)':>9} {'target':>9} {'dev/se':>7}")
for name, d, target in rows:
    se = d.std(ddof=1) / np.sqrt(N)
    print(f"{name:<18} {d.mean():9.4f} {target:9.4f} {abs(d.mean()-target)/se:7.2f}")

print("\nevery signal recovers its functional to Monte Carlo accuracy;")
print("the odds ratio needed nothing beyond f and its two partials.")
