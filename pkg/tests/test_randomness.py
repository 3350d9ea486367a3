import pytest

from macsecsim.netsim import Simulation
from macsecsim.randomness import IvUniquenessRegistry, RandomSource
from macsecsim.topology import chain_spec


def test_seeded_source_is_reproducible():
    a, b = RandomSource(5), RandomSource(5)
    assert a.rand_bytes(16) == b.rand_bytes(16)
    assert a.boot_seq() == b.boot_seq()
    assert RandomSource(5).rand_bytes(16) != RandomSource(6).rand_bytes(16)


def test_nonce_reuse_is_a_hard_error():
    src = RandomSource(5)
    nonce = src.lldp_nonce()
    src._nonces_issued.discard(nonce)  # rewind the book-keeping
    src._rng.seed(5)  # force the generator to repeat itself
    src._nonces_issued.add(src.lldp_nonce())
    src._rng.seed(5)
    with pytest.raises(AssertionError, match="nonce reuse"):
        src.lldp_nonce()


def test_iv_registry_flags_reuse():
    reg = IvUniquenessRegistry()
    reg.observe(b"k" * 16, b"i" * 12)
    reg.observe(b"k" * 16, b"j" * 12)
    with pytest.raises(AssertionError, match="reuse"):
        reg.observe(b"k" * 16, b"i" * 12)


def test_os_entropy_mode_runs():
    sim = Simulation(chain_spec(2), seed=0, random_mode="os")
    sim.quiesce()
    assert len(sim.central.confirmed_links()) == 1


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        RandomSource(0, mode="quantum")
