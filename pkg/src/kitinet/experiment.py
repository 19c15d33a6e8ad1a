"""Train-then-analyze driver shared by the CLI and the condensation study."""
from dataclasses import dataclass, replace

from .condense import condensation_score, cosine_matrix
from .kernel import KitiConfig
from .net import NetworkSpec, TrainConfig, make_sine_dataset, train


@dataclass
class ScoredRun:
    run: object
    matrices: list  # CondensationMatrix per (checkpoint, analyzed layer)
    scores: list  # (epoch, layer, score)

    def final_score(self, layer=None):
        if not self.scores:
            return float("nan")
        last = max(e for e, _, _ in self.scores)
        layer = self.scores[0][1] if layer is None else layer
        return next(s for e, l, s in self.scores if e == last and l == layer)

    def final_loss(self):
        return self.run.losses[-1][1] if self.run.losses else float("nan")


def score_snapshots(snapshots, layers, threshold):
    matrices, scores = [], []
    for epoch in sorted(snapshots):
        for layer in layers:
            W, _ = snapshots[epoch][layer - 1]
            mat = cosine_matrix(W, layer_index=layer, epoch=epoch)
            matrices.append(mat)
            scores.append((epoch, layer, condensation_score(mat, threshold)))
    return matrices, scores


def train_and_score(spec, train_config, dataset, layers=(1,), threshold=0.95):
    run = train(spec, train_config, dataset)
    return ScoredRun(run, *score_snapshots(run.snapshots, layers, threshold))


# the two pairings of the condensation study
def condensation_variants(m=50, gamma=4.0, n_divide=1, coll_coef=0.5, dt=1.0, seed=0):
    kiti = KitiConfig(dt=dt, n_divide=n_divide, coll_coef=coll_coef, seed=seed)
    fc = NetworkSpec(hidden_dim=m, depth=3, activation="relu", gamma=gamma, kiti=kiti)
    skip = NetworkSpec(hidden_dim=m, depth=6, activation="leaky_relu", skip_connections=True,
                       gamma=gamma, kiti=kiti)
    return {
        "fc_baseline": fc,
        "fc_kiti": replace(fc, kiti_layers=(2,)),
        "skip_kiti_last": replace(skip, kiti_layers=(5,)),
        "skip_kiti_last2": replace(skip, kiti_layers=(4, 5)),
    }


def condensation_study(seeds, epochs=100, n=80, checkpoints=(1, 10, 50, 100), layer=1,
                       threshold=0.95, learning_rate=1e-3, optimizer="adam", data_seed=0,
                       **variant_kw):
    """Final-epoch scores per variant per seed: ``{variant: [score, ...]}``.

    The dataset is drawn once; a seed sets the initial weights and the
    collision randomness, shared by all variants.
    """
    out = {}
    dataset = make_sine_dataset(n, seed=data_seed)
    for seed in seeds:
        tc = TrainConfig(epochs=epochs, learning_rate=learning_rate, optimizer=optimizer,
                         seed=seed, checkpoints=checkpoints)
        for name, spec in condensation_variants(seed=seed, **variant_kw).items():
            res = train_and_score(spec, tc, dataset, (layer,), threshold)
            out.setdefault(name, []).append(res.final_score(layer))
    return out
