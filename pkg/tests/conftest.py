import numpy as np
import pytest

from unimatte import data, synthetic


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """Small shared-foreground training corpus: 6 foregrounds x 4 backgrounds
    of 64 px images."""
    root = tmp_path_factory.mktemp("desk_corpus")
    rng = np.random.default_rng(100)
    fgs = [
        data.Foreground(f"fg{i}", *synthetic.make_foreground(rng, 64, 64, transparent=(i >= 4)))
        for i in range(6)
    ]
    bgs = [data.Background(f"bg{i}", synthetic.make_texture(rng, 64, 64)) for i in range(6)]
    manifest = data.build_composites(fgs, bgs, per_fg=4, seed=0, out_root=root)
    return root, manifest
