import numpy as np
import pytest

from smoothboost.model import InvalidArgumentError
from smoothboost.streams import check_seed, derive_seed, stream


def test_same_key_same_stream():
    np.testing.assert_array_equal(stream(7, 3).random(5), stream(7, 3).random(5))


def test_keys_give_independent_streams():
    assert not np.array_equal(stream(7, 3).random(5), stream(7, 4).random(5))
    assert not np.array_equal(stream(7, 3).random(5), stream(8, 3).random(5))


def test_derived_seed_is_stable_64_bit():
    seed = derive_seed(42, 1)
    assert seed == derive_seed(42, 1)
    assert 0 <= seed < 2 ** 64
    assert seed != derive_seed(42, 2)


@pytest.mark.parametrize("seed", [-1, 2 ** 64])
def test_seed_range(seed):
    with pytest.raises(InvalidArgumentError):
        check_seed(seed)
