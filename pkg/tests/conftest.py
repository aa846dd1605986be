import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from prefobf.dataset import GroupPartition, InteractionDataset  # noqa: E402


def make_dataset(profiles, n_items=None):
    n_items = n_items if n_items is not None else 1 + max((max(p) for p in profiles if len(p)), default=0)
    users = [f"u{u}" for u in range(len(profiles))]
    items = [f"i{i}" for i in range(n_items)]
    return InteractionDataset.from_profiles(users, items, profiles)


def make_partition(groups):
    return GroupPartition(("g0", "g1"), np.asarray(groups))


@pytest.fixture
def write_file(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write
