import pytest

from greenbytes import EnergyCoeffs, NodeRole, SynthConfig, simulate
from greenbytes.pipeline import train_energy_model

FAST_LSTM = {
    "hidden_size": 6,
    "epochs": 8,
    "learning_rate": 0.02,
    "grad_clip_norm": 5.0,
    "seed": 3,
}
FAST_GBT = {"n_estimators": 40, "learning_rate": 0.1, "max_depth": 3, "min_samples_leaf": 2}


@pytest.fixture(scope="session")
def master_dataset():
    return simulate(SynthConfig(seed=21, duration_steps=160, noise_std=1.0,
                                workload_profile="bursty"))


@pytest.fixture(scope="session")
def worker_dataset():
    return simulate(
        SynthConfig(seed=22, duration_steps=120, noise_std=1.0, workload_profile="bursty"),
        node=NodeRole.worker(1),
    )


@pytest.fixture(scope="session")
def lstm_result(master_dataset):
    return train_energy_model(master_dataset, "lstm", window_len=6, lstm_params=FAST_LSTM)


@pytest.fixture(scope="session")
def gbt_result(master_dataset):
    return train_energy_model(master_dataset, "gbt", gbt_params=FAST_GBT)
