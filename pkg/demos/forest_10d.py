"""Ten-dimensional benchmark with honest-forest stages and confounding.

Covariates are uniform on [0,1]^10; under confounding the treatment
probability and the baseline outcome both depend on the third
coordinate, so a naive arm contrast is biased.  The effect surface is
a product of two smooth single-coordinate bumps.  Forest learners
handle the dimensionality; cross-fitting plus the doubly robust signal
handles the confounding with an estimated propensity.
"""

import numpy as np

from pseudolearn.crossfit import CrossfitConfig
from pseudolearn.iflearner import IFLearnerConfig, fit_if_learner, fit_plugin_learner
from pseudolearn.learners import LearnerSpec
from pseudolearn.simulate import Dgp10dConfig, evaluate_mse, sample_10d

forest = LearnerSpec(kind="forest", n_trees=150, min_leaf=10)
cfg = IFLearnerConfig(
    crossfit=CrossfitConfig(
        outcome_spec=forest, propensity_spec=forest, n_folds=5
    ),
    second_stage=forest,
    seed=12,
)

train = sample_10d(Dgp10dConfig(confounded=True, effect="xi_product",
                                n=2000, seed=31))
test = sample_10d(Dgp10dConfig(confounded=True, effect="xi_product",
                               n=1000, seed=32))

print("confounded 10-d generator, smooth product effect, n=2000")
print(f"effect range on test draw: [{test.true_tau.min():.2f}, "
      f"{test.true_tau.max():.2f}]\n")

plugin = fit_plugin_learner(train.dataset, cfg)
corrected = fit_if_learner(train.dataset, cfg)  # propensity estimated

for name, model in (("plug-in arm contrast", plugin),
                    ("corrected learner   ", corrected)):
    preds = model.predict(test.dataset.X)
    corr = np.corrcoef(preds, test.true_tau)[0, 1]
    print(f"  {name} test MSE {evaluate_mse(model, test):.4f}   "
          f"corr(pred, truth) {corr:.3f}")

print("\nbias from selection on the third coordinate hits the naive")
print("contrast harder than the cross-fitted, propensity-adjusted signal.")
