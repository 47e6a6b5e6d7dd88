import numpy as np
import pytest

from leafcnn.data import AugmentConfig, generate_synthetic_dataset, scan_manifest


def identity_augment() -> AugmentConfig:
    return AugmentConfig(0.0, 0.0, 0.0, (1.0, 1.0))


def central_diff(f, arr, analytic, eps=1e-3, rel_tol=1e-5, max_checks=60, seed=0):
    """Central finite differences of scalar f against an analytic gradient.

    Perturbs up to max_checks entries of arr in place; returns the worst
    relative error found. arr must be float64 for eps=1e-3 to be honest.
    """
    assert arr.dtype == np.float64
    flat = arr.ravel()
    picker = np.random.default_rng(seed)
    idx = picker.choice(flat.size, size=min(max_checks, flat.size), replace=False)
    worst = 0.0
    for i in idx:
        saved = flat[i]
        flat[i] = saved + eps
        plus = f()
        flat[i] = saved - eps
        minus = f()
        flat[i] = saved
        numeric = (plus - minus) / (2.0 * eps)
        ana = float(analytic.ravel()[i])
        rel = abs(numeric - ana) / max(abs(numeric), abs(ana), 1e-8)
        worst = max(worst, rel)
    assert worst < rel_tol, f"gradient mismatch: worst rel err {worst:.3e}"
    return worst


@pytest.fixture(scope="session")
def synth4(tmp_path_factory):
    """4 classes x 32 images, 64x64, fixed seed; scanned manifest."""
    root = tmp_path_factory.mktemp("synth4")
    generate_synthetic_dataset(4, 32, 11, root)
    return scan_manifest(root)


@pytest.fixture(scope="session")
def synth2(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth2")
    generate_synthetic_dataset(2, 16, 3, root)
    return scan_manifest(root)
