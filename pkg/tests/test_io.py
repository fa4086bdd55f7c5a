import numpy as np
import pytest

from spvtrap.io import DatasetError, ingest_dataset, read_csv, save_svg, write_csv


def _write(tmp_path, text):
    p = tmp_path / "data.csv"
    p.write_text(text)
    return p


def test_three_rows(tmp_path):
    p = _write(tmp_path, "# measured\nwavelength_nm,flux_cm2s,dV_volts,sigma_volts\n"
                         "1055,1e14,-0.05,0.005\n1055,1e15,-0.08,0.005\n635,1e15,-0.02,0.004\n")
    ds = ingest_dataset(p)
    assert len(ds) == 3
    np.testing.assert_allclose(ds.photon_flux, [1e14, 1e15, 1e15])


def test_columns_in_any_order_and_duplicates_kept(tmp_path):
    p = _write(tmp_path, "sigma_volts,dV_volts,wavelength_nm,flux_cm2s\n"
                         "0.005,-0.05,1055,1e14\n0.005,-0.05,1055,1e14\n")
    ds = ingest_dataset(p)
    assert len(ds) == 2
    assert ds.wavelength_nm[0] == 1055 and ds.uncertainty[1] == 0.005


def test_bad_rows_reported_together(tmp_path):
    p = _write(tmp_path, "wavelength_nm,flux_cm2s,dV_volts,sigma_volts\n"
                         "1055,-1e14,-0.05,0.005\n"
                         "1055,1e15,abc,0.005\n"
                         "1055,1e15,-0.05,0\n"
                         "1055,1e15\n")
    with pytest.raises(DatasetError) as exc:
        ingest_dataset(p)
    lines = [n for n, _ in exc.value.problems]
    assert lines == [2, 3, 4, 5]
    assert "line 2" in str(exc.value) and "flux" in str(exc.value)


def test_missing_header(tmp_path):
    with pytest.raises(DatasetError):
        ingest_dataset(_write(tmp_path, "a,b,c\n1,2,3\n"))
    with pytest.raises(DatasetError):
        ingest_dataset(_write(tmp_path, "# only comments\n"))


def test_csv_round_trip_and_determinism(tmp_path):
    rows = [(1.0, 2.5e-10, 3), (np.float64(1 / 3), np.nan, 4)]
    a = write_csv(tmp_path / "a.csv", ("x", "y", "k"), rows, {"config_hash": "abc"})
    b = write_csv(tmp_path / "b.csv", ("x", "y", "k"), rows, {"config_hash": "abc"})
    assert a.read_bytes() == b.read_bytes()
    header, arr = read_csv(a)
    assert header == ["x", "y", "k"]
    assert arr[1, 0] == pytest.approx(1 / 3, rel=1e-9)
    assert np.isnan(arr[1, 1])
    assert "# config_hash: abc" in a.read_text()


def test_svg_is_reproducible(tmp_path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for name in ("a.svg", "b.svg"):
        fig, ax = plt.subplots()
        ax.plot([0, 1], [1, 0])
        paths.append(save_svg(fig, tmp_path / name, {"config_hash": "abc"}))
        plt.close(fig)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert "<!-- spvtrap" in paths[0].read_text()
