import factory
import numpy as np

from social_radar.dynamics import SteadyStateData, collect_dataset
from social_radar.graph import (
    DRegular,
    ErdosRenyi,
    NetworkInstance,
    TrustMatrix,
    generate_instance,
)


class NetworkInstanceFactory(factory.Factory):
    network = ErdosRenyi(p=0.5)
    placement = DRegular(d=3)
    n_ord = 12
    n_s = 8
    seed = factory.Sequence(lambda n: n)

    class Meta:
        model = NetworkInstance

    @classmethod
    def _create(cls, model_class, *args, **kwargs):
        return generate_instance(**kwargs)

    @classmethod
    def _build(cls, model_class, *args, **kwargs):
        return generate_instance(**kwargs)


class TrustMatrixFactory(factory.Factory):
    """
    Random row-stochastic trust with every ordinary agent listening to at least one
    stubborn agent. ``self_trust`` bounds the share of each row kept on the diagonal.
    """

    n_ord = 6
    n_s = 3
    density = 0.5
    self_trust = 0.0
    seed = factory.Sequence(lambda n: n)

    class Meta:
        model = TrustMatrix

    @classmethod
    def _create(cls, model_class, n_ord, n_s, density, self_trust, seed):
        rng = np.random.default_rng(seed)
        B = np.where(rng.random((n_ord, n_s)) < density, rng.random((n_ord, n_s)), 0.0)
        B[np.arange(n_ord), rng.integers(n_s, size=n_ord)] += 0.5
        D = np.where(rng.random((n_ord, n_ord)) < density, rng.random((n_ord, n_ord)), 0.0)
        np.fill_diagonal(D, 0.0)
        totals = B.sum(axis=1) + D.sum(axis=1)
        diagonal = self_trust * rng.random(n_ord)
        B = (1.0 - diagonal)[:, None] * B / totals[:, None]
        D = (1.0 - diagonal)[:, None] * D / totals[:, None]
        np.fill_diagonal(D, diagonal)
        return model_class(B=B, D=D)

    @classmethod
    def _build(cls, model_class, *args, **kwargs):
        return cls._create(model_class, *args, **kwargs)


class NoiselessDatasetFactory(factory.Factory):
    """Deterministic noiseless steady states with ``K = k_factor * n_s`` discussions."""

    trust = factory.SubFactory(TrustMatrixFactory)
    k_factor = 2
    seed = factory.Sequence(lambda n: 1000 + n)

    class Meta:
        model = SteadyStateData

    @classmethod
    def _create(cls, model_class, trust, k_factor, seed):
        return collect_dataset(trust, k_factor * trust.n_s, seed=seed)

    @classmethod
    def _build(cls, model_class, *args, **kwargs):
        return cls._create(model_class, *args, **kwargs)
