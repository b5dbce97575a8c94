import numpy as np

from diffusion_classifier.rng import derive_seed, generator


def test_derive_seed_frozen_values():
    # frozen so the stream layout can never silently change between versions
    assert derive_seed(0, 0) == 10204637987496433424
    assert derive_seed(42, 3, 1) == 17319782608013274287


def test_derive_seed_deterministic_and_distinct():
    seen = {derive_seed(7, i) for i in range(1000)}
    assert len(seen) == 1000
    assert derive_seed(7, 500) in seen


def test_derive_seed_order_sensitive():
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)


def test_generator_reproducible():
    a = generator(123).standard_normal(8)
    b = generator(123).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, generator(124).standard_normal(8))
