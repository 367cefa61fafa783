import numpy as np
import pandas as pd
import pytest

from qrpredict.data import RunConfig, load_panel, load_run_config, read_data
from qrpredict.errors import ContractError, ParameterError
from qrpredict.forecast import QuantileGrid
from qrpredict.predictors import construct_cp, construct_trend


def write(tmp_path, frame, name="data.csv"):
    path = tmp_path / name
    frame.to_csv(path, index=False)
    return path


def monthly(n, **cols):
    dates = pd.period_range("2000-01", periods=n, freq="M").strftime("%Y-%m")
    return pd.DataFrame({"date": dates, **cols})


class TestRunConfig:
    def test_defaults(self):
        cfg = load_run_config()
        assert len(cfg.grid) == 99
        assert (cfg.M1, cfg.M2, cfg.threshold, cfg.instrument.delta, cfg.instrument.lam) == (100, 50, 0.01, 0.95, 0.5)

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "columns: {response: rx2, predictors: [a, b]}\n"
            "tau_grid: '0.1:0.9:0.4'\n"
            "density: {M1: 10, M2: 20}\n"
            "seed: 3\n"
            "forecast: {T_m: 40, baseline: [a]}\n"
        )
        cfg = load_run_config(path, seed=9, threshold=0.05)
        assert cfg.response == "rx2" and cfg.predictors == ("a", "b")
        assert cfg.grid.taus == pytest.approx((0.1, 0.5, 0.9))
        assert (cfg.M1, cfg.M2, cfg.seed, cfg.threshold, cfg.T_m, cfg.baseline) == (10, 20, 9, 0.05, 40, ("a",))
        assert cfg.density(7).key == (7,)

    @pytest.mark.parametrize(
        "text, field",
        [
            ("colums: {}", "colums"),
            ("columns: {respons: y}", "respons"),
            ("instrument: {cz: -3}", "cz"),
            ("density: {M3: 1}", "M3"),
            ("forecast: {Tm: 4}", "Tm"),
            ("construct: {TI: {trend: infl}}", "trend"),
        ],
    )
    def test_unknown_keys_named(self, tmp_path, text, field):
        path = tmp_path / "bad.yaml"
        path.write_text(text + "\n")
        with pytest.raises(ParameterError, match=field):
            load_run_config(path)

    def test_bad_threshold(self):
        with pytest.raises(ParameterError):
            load_run_config(threshold=1.5)


class TestReadData:
    def test_normalizes_dates(self, tmp_path):
        df = read_data(write(tmp_path, monthly(3, y=[1.0, 2.0, 3.0])))
        assert list(df["date"]) == ["2000-01", "2000-02", "2000-03"]

    def test_gap_in_months(self, tmp_path):
        frame = pd.DataFrame({"date": ["2000-01", "2000-02", "2000-04"], "y": [1.0, 2.0, 3.0]})
        with pytest.raises(ContractError, match="monthly"):
            read_data(write(tmp_path, frame))

    def test_bad_date_format(self, tmp_path):
        frame = pd.DataFrame({"date": ["2000/01", "2000/02"], "y": [1.0, 2.0]})
        with pytest.raises(ContractError, match="yyyy-mm"):
            read_data(write(tmp_path, frame))

    def test_missing_date_column(self, tmp_path):
        with pytest.raises(ContractError, match="'when'"):
            read_data(write(tmp_path, monthly(3, y=[1.0, 2.0, 3.0])), "when")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ContractError):
            read_data(tmp_path / "none.csv")


class TestLoadPanel:
    def test_lag_alignment(self, tmp_path):
        frame = monthly(5, y=[10.0, 11.0, 12.0, 13.0, 14.0], a=[0.0, 1.0, 2.0, 3.0, 4.0])
        cfg = RunConfig(predictors=("a",))
        panel = load_panel(write(tmp_path, frame), cfg)
        np.testing.assert_array_equal(panel.y, [11.0, 12.0, 13.0, 14.0])
        np.testing.assert_array_equal(panel.x[:, 0], [0.0, 1.0, 2.0, 3.0])
        assert list(panel.periods) == ["2000-02", "2000-03", "2000-04", "2000-05"]

    def test_trend_drops_undefined_row(self, tmp_path):
        infl = np.arange(6.0)
        frame = monthly(6, y=np.arange(6.0) * 2, infl=infl)
        cfg = RunConfig(predictors=("TI",), construct={"TI": {"trend_of": "infl"}})
        panel = load_panel(write(tmp_path, frame), cfg)
        trend = construct_trend(infl)
        np.testing.assert_allclose(panel.x[:, 0], trend[1:-1])
        np.testing.assert_array_equal(panel.y, (np.arange(6.0) * 2)[2:])

    def test_cp_factor(self, tmp_path):
        rng = np.random.default_rng(1)
        n = 40
        F = rng.standard_normal((n, 5))
        rx = rng.standard_normal((n, 2))
        cols = {f"F{k + 1}": F[:, k] for k in range(5)}
        frame = monthly(n, y=rng.standard_normal(n), r1=rx[:, 0], r2=rx[:, 1], **cols)
        spec = {"forwards": [f"F{k + 1}" for k in range(5)], "avg_rx": ["r1", "r2"]}
        cfg = RunConfig(predictors=("CP",), construct={"CP": spec})
        panel = load_panel(write(tmp_path, frame), cfg)
        fit = construct_cp(F[:-1], rx.mean(axis=1)[1:])
        # the factor on each regression row is the fitted value for the next month's return
        np.testing.assert_allclose(panel.x[:, 0], fit.values, atol=1e-10)

    def test_missing_column_named(self, tmp_path):
        cfg = RunConfig(predictors=("zz",))
        with pytest.raises(ContractError, match="'zz'"):
            load_panel(write(tmp_path, monthly(4, y=np.ones(4))), cfg)

    def test_non_numeric_named(self, tmp_path):
        frame = monthly(4, y=[1.0, 2.0, 3.0, 4.0], a=["1", "x", "2", "3"])
        with pytest.raises(ContractError, match="'a'"):
            load_panel(write(tmp_path, frame), RunConfig(predictors=("a",)))

    def test_missing_value_named(self, tmp_path):
        frame = monthly(4, y=[1.0, np.nan, 3.0, 4.0], a=np.arange(4.0))
        with pytest.raises(ContractError, match="'y'"):
            load_panel(write(tmp_path, frame), RunConfig(predictors=("a",)))

    def test_no_predictors(self, tmp_path):
        with pytest.raises(ParameterError):
            load_panel(write(tmp_path, monthly(4, y=np.ones(4))), load_run_config())

    def test_grid_type(self):
        assert isinstance(load_run_config().grid, QuantileGrid)
