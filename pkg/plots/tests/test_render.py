"""Rendering contracts: schemas, exit codes, and output files."""

import pytest

from figplots import FigureSpec, SchemaError, render


RATIO_CSV = """n,beta,r_n
1,-0.1,0.03
2,-0.1,-0.02
3,-0.1,0.012
1,-0.4,0.05
2,-0.4,-0.031
3,-0.4,0.02
1,-0.9,0.09
2,-0.9,-0.05
3,-0.9,0.031
"""

PAYOFF_CSV = """n_terms,beta,plain_rel_err_pct,cesaro_rel_err_pct
10,-0.1,12.0,8.0
20,-0.1,-9.0,5.0
30,-0.1,7.5,3.0
"""

PRICE_CSV = """method,K,T,price,elapsed_s,modes,iterations,residual
git,55,0.25,5.07,0.4,350,1,1e-9
git,55,0.5,3.53,0.4,350,1,1e-9
git,60,0.25,2.57,0.4,350,1,1e-9
git,60,0.5,1.81,0.4,350,1,1e-9
fd-2d,55,0.25,5.06,0.2,0,50,0
fd-2d,55,0.5,NA,0.2,0,50,0
"""

SURFACE_CSV = """f,sigma,price
0.0,0.1,0.0
0.0,0.2,0.0
40.0,0.1,3.0
40.0,0.2,2.5
80.0,0.1,0.0
80.0,0.2,0.0
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("kind,text", [
    ("ratio", RATIO_CSV),
    ("payoff_error", PAYOFF_CSV),
    ("price_fan", PRICE_CSV),
    ("surface", SURFACE_CSV),
])
def test_renders_image(tmp_path, kind, text):
    src = write(tmp_path, "in.csv", text)
    out = tmp_path / f"{kind}.png"
    spec = FigureSpec(input_csv=src, figure_kind=kind,
                      output_image=str(out))
    assert render(spec) == 0
    assert out.exists() and out.stat().st_size > 1000


def test_partial_sum_kind(tmp_path):
    src = write(tmp_path, "in.csv", "m,beta,z_m\n1,-0.1,0.01\n2,-0.1,0.012\n")
    out = tmp_path / "z.png"
    assert render(FigureSpec(src, "partial_sum", str(out))) == 0
    assert out.exists()


def test_schema_mismatch_exits_2(tmp_path, capsys):
    src = write(tmp_path, "in.csv", PAYOFF_CSV)
    assert render(FigureSpec(src, "ratio", str(tmp_path / "x.png"))) == 2
    assert "needs columns" in capsys.readouterr().err
    assert not (tmp_path / "x.png").exists()


def test_empty_but_valid_csv_exits_2(tmp_path):
    src = write(tmp_path, "in.csv", "n,beta,r_n\n")
    assert render(FigureSpec(src, "ratio", str(tmp_path / "x.png"))) == 2


def test_missing_file_exits_2(tmp_path):
    spec = FigureSpec(str(tmp_path / "nope.csv"), "ratio",
                      str(tmp_path / "x.png"))
    assert render(spec) == 2


def test_incomplete_surface_grid_exits_2(tmp_path):
    src = write(tmp_path, "in.csv", "f,sigma,price\n0,0.1,0\n1,0.2,1\n")
    assert render(FigureSpec(src, "surface", str(tmp_path / "x.png"))) == 2


def test_all_na_price_fan_exits_2(tmp_path):
    src = write(tmp_path, "in.csv",
                "method,K,T,price,elapsed_s,modes,iterations,residual\n"
                "git,55,0.25,NA,0.1,1,1,0\n")
    assert render(FigureSpec(src, "price_fan", str(tmp_path / "x.png"))) == 2


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureSpec("x.csv", "pie", "y.png")


def test_cli_entry_points(tmp_path):
    from figplots import cli
    src = write(tmp_path, "in.csv", RATIO_CSV)
    out = tmp_path / "r.png"
    assert cli.main_ratio(["--input", src, "--output", str(out)]) == 0
    assert out.exists()
