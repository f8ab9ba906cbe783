# tests/test_data_model.py

import unittest

import numpy as np
import pytest

from modules.data_model import (
    ParamVector,
    anc_to_csv,
    constant_demography,
    data_years,
    demography_to_csv,
    npbs_to_csv,
    parse_anc_csv,
    parse_area_dataset,
    parse_demography_csv,
    parse_npbs_csv,
)
from modules.errors import DataParseError, DataValidationError

DEMOG_CSV = demography_to_csv(constant_demography(1990, 2010, population=5000.0))
NPBS_CSV = "year,prevalence,se\n2002,0.06,0.005\n"


class TestParseAreaDataset(unittest.TestCase):

    def test_single_anc_row(self):
        ds = parse_area_dataset("site,year,prevalence,n\nsiteA,2001,0.05,300\n", "", DEMOG_CSV, "a1")
        self.assertEqual(len(ds.anc), 1)
        self.assertEqual(ds.anc[0].site_id, "siteA")
        self.assertEqual(ds.anc[0].year, 2001)
        self.assertAlmostEqual(ds.anc[0].prevalence, 0.05)
        self.assertEqual(ds.anc[0].sample_size, 300)
        self.assertEqual(ds.npbs, ())

    def test_prevalence_out_of_range(self):
        with self.assertRaises(DataValidationError) as ctx:
            parse_area_dataset("site,year,prevalence,n\nsiteA,2001,1.2,300\n", "", DEMOG_CSV, "a1")
        self.assertIn("line 2", str(ctx.exception))

    def test_two_sites_three_years(self):
        rows = [f"{s},{y},0.1,200" for s in ("s1", "s2") for y in (2000, 2001, 2002)]
        ds = parse_area_dataset("site,year,prevalence,n\n" + "\n".join(rows) + "\n", NPBS_CSV, DEMOG_CSV, "a1")
        self.assertEqual(len(ds.anc), 6)
        self.assertEqual(ds.n_anc_sites, 2)
        self.assertEqual(list(ds.anc_sites()), ["s1", "s2"])

    def test_boundary_prevalence_kept_verbatim(self):
        text = "site,year,prevalence,n\ns1,1995,0,150\ns1,1996,1,150\n"
        ds = parse_area_dataset(text, "", DEMOG_CSV, "a1")
        self.assertEqual([o.prevalence for o in ds.anc], [0.0, 1.0])

    def test_year_outside_demography(self):
        with self.assertRaises(DataValidationError):
            parse_area_dataset("site,year,prevalence,n\ns1,2020,0.1,100\n", "", DEMOG_CSV, "a1")

    def test_empty_dataset(self):
        with self.assertRaises(DataValidationError):
            parse_area_dataset("site,year,prevalence,n\n", "year,prevalence,se\n", DEMOG_CSV, "a1")

    def test_malformed_row_names_line(self):
        with self.assertRaises(DataParseError) as ctx:
            parse_anc_csv("site,year,prevalence,n\ns1,2000,0.1,100\ns1,2001,abc,100\n")
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn("line 3", str(ctx.exception))

    def test_extra_field_names_line(self):
        with self.assertRaises(DataParseError) as ctx:
            parse_anc_csv("site,year,prevalence,n\ns1,2000,0.1,100\ns1,2001,0.1,100,7\n")
        self.assertEqual(ctx.exception.line, 3)

    def test_wrong_header(self):
        with self.assertRaises(DataParseError) as ctx:
            parse_npbs_csv("year,prev,se\n2000,0.1,0.01\n")
        self.assertEqual(ctx.exception.line, 1)

    def test_non_positive_se(self):
        with self.assertRaises(DataValidationError):
            parse_npbs_csv("year,prevalence,se\n2000,0.1,0\n")

    def test_demography_gap(self):
        with self.assertRaises(DataValidationError):
            parse_demography_csv("year,entrants,mu,a50,migration\n2000,1,0.01,1,0\n2002,1,0.01,1,0\n", 100.0)

    def test_negative_mortality(self):
        with self.assertRaises(DataValidationError):
            parse_demography_csv("year,entrants,mu,a50,migration\n2000,1,-0.01,1,0\n", 100.0)


@pytest.mark.parametrize(
    "anc_years, npbs_years, expected",
    [
        ([2000, 2002], [2002], [2000, 2002]),
        ([2005], [], [2005]),
        (list(range(1995, 2004)), [], list(range(1995, 2004))),
        ([2003, 2001], [1999, 2001], [1999, 2001, 2003]),
    ],
)
def test_data_years(anc_years, npbs_years, expected):
    anc = "site,year,prevalence,n\n" + "".join(f"s1,{y},0.1,100\n" for y in anc_years)
    npbs = "year,prevalence,se\n" + "".join(f"{y},0.1,0.01\n" for y in npbs_years)
    ds = parse_area_dataset(anc, npbs, DEMOG_CSV, "a1")
    years = data_years(ds)
    assert years == expected
    assert years == sorted(set(years))


def test_serialise_reproduces_observations():
    anc_text = "site,year,prevalence,n\nsA,2000,0.125,400\nsB,2001,0.0,80\nsA,2001,0.13,410\n"
    anc = parse_anc_csv(anc_text)
    assert parse_anc_csv(anc_to_csv(anc)) == anc

    npbs = parse_npbs_csv("year,prevalence,se\n2003,0.061,0.0042\n")
    assert parse_npbs_csv(npbs_to_csv(npbs)) == npbs

    demog = constant_demography(1980, 1990, population=1234.5, mu=0.02)
    assert parse_demography_csv(demography_to_csv(demog), 1234.5) == demog


def test_param_vector_order_and_finiteness():
    values = [1980.0, 20.0, 0.42, 0.46, 0.17, -0.68, -0.038, 0.14]
    theta = ParamVector.from_array(values)
    np.testing.assert_array_equal(theta.as_array(), values)
    assert theta.beta0 == 0.46 and theta.beta1 == 0.17
    with pytest.raises(DataValidationError):
        ParamVector.from_array(values[:-1])
    with pytest.raises(DataValidationError):
        theta.replace(beta2=float("nan"))


def test_constant_demography_balances_entrants():
    demog = constant_demography(1970, 1975, population=1000.0, mu=0.01, a50_fraction=0.02)
    assert demog.entrants[0] == pytest.approx(0.01 * 1000 + 20.0)
    assert demog.year_end == 1975
    with pytest.raises(DataValidationError):
        demog.table(1969, 1975)
