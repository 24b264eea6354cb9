import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.core.data_model import make_dataset, synth_planted


@pytest.fixture
def temp_dir():
    """Create temporary directory for tests"""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def planted_small():
    """Small planted dataset: 30 samples, 40 features, 4 informative"""
    return synth_planted(n=30, p=40, n_informative=4, k=2, effect=3.0, seed=11)


@pytest.fixture
def planted_three_class():
    """Three balanced classes, 36 samples, 20 features, 3 informative"""
    return synth_planted(n=36, p=20, n_informative=3, k=3, effect=3.0, seed=5)


@pytest.fixture
def tiny_dataset():
    """Hand-built 6 x 3 dataset; feature 0 separates the classes"""
    X = np.array([
        [0.0, 1.0, 5.0],
        [0.2, -1.0, 4.0],
        [0.1, 0.5, 6.0],
        [3.0, 0.7, 5.5],
        [3.2, -0.4, 4.5],
        [2.9, 0.1, 5.2],
    ])
    return make_dataset(
        features=X,
        labels=np.array([0, 0, 0, 1, 1, 1]),
        feature_names=("f0", "f1", "f2"),
        sample_names=tuple(f"s{i}" for i in range(6)),
        class_names=("a", "b"),
    )


@pytest.fixture
def sample_csv_path(temp_dir):
    """Create a small samples-as-rows CSV file"""
    path = Path(temp_dir) / "samples.csv"
    path.write_text(
        "label,g1,g2,g3\n"
        "tumor,1.5,2.0,0.1\n"
        "normal,0.5,1.0,0.2\n"
        "tumor,1.7,2.2,0.3\n"
        "normal,0.4,0.9,0.1\n"
    )
    return str(path)
