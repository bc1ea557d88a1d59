"""
Bayesian optimization of the architecture
=========================================

A Gaussian-process surrogate with expected improvement searches the
architecture box. Here the objective is analytic (distance to a hidden
configuration) so the comparison with random search takes seconds.
"""

from gaitshap.hyperopt import SearchSpace, bayes_optimize, encode_config, random_search

space = SearchSpace("conv")
hidden = {"stack_count": 2, "learning_rate": 1e-3, "dense_units": 128, "head_dropout": 0.3,
          "stacks": [{"units": 64, "kernel_size": 9, "dropout": None},
                     {"units": 256, "kernel_size": 3, "dropout": 0.2}]}
target = encode_config(hidden, space)


def objective(cfg):
    return -float(((encode_config(cfg, space) - target) ** 2).sum())


for seed in range(3):
    best, trials = bayes_optimize(objective, space, n_trials=15, seed=seed)
    _, rs = random_search(objective, space, n_trials=15, seed=seed)
    print(f"seed {seed}: BO best {max(t.objective for t in trials):.3f}, "
          f"random best {max(t.objective for t in rs):.3f}")
print("last BO proposal:", best)
