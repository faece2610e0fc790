import json

import numpy as np
import pytest

from irdrop.data import Dataset, SplitSpec, split_dataset
from irdrop.exceptions import ValidationError
from irdrop.gnn import GnnConfig
from irdrop.baselines.cnn import CnnConfig
from irdrop.baselines.gbt import GbtConfig
from irdrop.pipeline import MODEL_KINDS, FittedModel, fit_model

from .conftest import make_record

CONFIGS = dict(
    gnn_config=GnnConfig(hidden_channels=8, heads=2, max_epochs=5),
    gbt_config=GbtConfig(n_trees=5),
    cnn_config=CnnConfig(encoder_channels=(4, 4, 4, 4), decoder_channels=(4, 4), max_epochs=3),
)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_fitted_model_round_trip(kind, small_dataset):
    split = split_dataset(small_dataset, SplitSpec(0.6, 0.2, 0.2, seed=1))
    fitted = fit_model(small_dataset, split, kind, "setB", **CONFIGS)
    back = FittedModel.from_dict(json.loads(json.dumps(fitted.to_dict())))
    pred = fitted.predict(small_dataset)
    assert pred.shape == (len(small_dataset),)
    assert np.array_equal(back.predict(small_dataset), pred)
    rows = fitted.history_rows()
    best = [r["best_val_mae_mv"] for r in rows]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert fitted.predict(Dataset([])).shape == (0,)


def test_missing_labels_named(small_dataset):
    recs = list(small_dataset.records)
    recs[0] = make_record(recs[0].net_id, recs[0].x_um, recs[0].y_um, label=None)
    ds = Dataset(recs)
    split = split_dataset(ds, SplitSpec(1.0, 0.0, 0.0))
    with pytest.raises(ValidationError, match="net_id 0"):
        fit_model(ds, split, "gcn")


def test_unknown_kind_and_checkpoint(small_dataset):
    split = split_dataset(small_dataset)
    with pytest.raises(ValidationError):
        fit_model(small_dataset, split, "mlp")
    with pytest.raises(ValidationError):
        FittedModel.from_dict({"format": "nope"})
