import csv
import json
import os
import subprocess
import sys
import tempfile
import unittest

DTL = os.environ["DTL_BIN"]
SPECS = os.environ["DTL_SPECS"]


def run(*args):
    return subprocess.run([DTL, *map(str, args)], capture_output=True, text=True)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TheoryCommand(unittest.TestCase):
    def test_optimal_ridge_and_kernel_match_bayes(self):
        with tempfile.TemporaryDirectory() as out:
            r = run("theory", "--spec", f"{SPECS}/fig2_top.json", "--alpha", "0.25:8:log20",
                    "--methods", "bayes,ridge:optimal,kernel:optimal", "--out", out)
            self.assertEqual(r.returncode, 0, r.stderr)
            bayes = read_csv(f"{out}/theory_bayes_regression.csv")
            self.assertEqual(len(bayes), 20)
            for kind in ("ridge", "kernel"):
                rows = read_csv(f"{out}/theory_{kind}.csv")
                for b, x in zip(bayes, rows, strict=True):
                    self.assertEqual(b["alpha"], x["alpha"])
                    self.assertLess(abs(float(b["error"]) - float(x["error"])), 1e-8)

    def test_grid_end_points_are_exact(self):
        with tempfile.TemporaryDirectory() as out:
            self.assertEqual(run("theory", "--spec", f"{SPECS}/fig2_top.json", "--alpha", "0.25:8:log4",
                                 "--out", out).returncode, 0)
            alphas = [row["alpha"] for row in read_csv(f"{out}/theory_bayes_regression.csv")]
            self.assertEqual(alphas[0], "0.25")
            self.assertEqual(alphas[-1], "8")

    def test_csv_rows_are_complete_and_round_trip(self):
        with tempfile.TemporaryDirectory() as out:
            run("theory", "--spec", f"{SPECS}/fig4.json", "--alpha", "0.5,1,2",
                "--methods", "bayes_classification,logistic:0.1", "--out", out)
            for name in ("theory_bayes_classification.csv", "theory_logistic.csv"):
                with open(f"{out}/{name}") as f:
                    lines = f.read().splitlines()
                header = lines[0].split(",")
                self.assertIn("error", header)
                for line in lines[1:]:
                    fields = line.split(",")
                    self.assertEqual(len(fields), len(header))
                    for v in fields[1:]:
                        self.assertEqual(float(repr(float(v))), float(v))


class Validation(unittest.TestCase):
    def test_empty_grid_writes_nothing(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = f"{tmp}/run"
            r = run("theory", "--spec", f"{SPECS}/fig2_top.json", "--alpha", "", "--out", out)
            self.assertEqual(r.returncode, 2)
            self.assertFalse(os.path.exists(out))

    def test_decreasing_grid_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            r = run("simulate", "--spec", f"{SPECS}/fig2_top.json", "--alpha", "2,1", "--out", f"{tmp}/run")
            self.assertEqual(r.returncode, 2)
            self.assertFalse(os.path.exists(f"{tmp}/run"))

    def test_parse_error_reports_line_and_column(self):
        with tempfile.TemporaryDirectory() as tmp:
            spec = f"{tmp}/broken.json"
            with open(spec, "w") as f:
                f.write('{\n  "activations": ["tanh:2"],\n  "widths": [1.4,,]\n}\n')
            r = run("theory", "--spec", spec, "--out", f"{tmp}/run")
            self.assertEqual(r.returncode, 2)
            self.assertIn("broken.json:3:", r.stderr)

    def test_unknown_flag_is_config_error(self):
        self.assertEqual(run("theory", "--no-such-flag").returncode, 2)

    def test_config_file_with_flag_override(self):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = f"{tmp}/cfg.json"
            with open(cfg, "w") as f:
                json.dump({"spec": f"{SPECS}/fig2_top.json", "alpha": [0.5, 1, 2], "methods": "ridge"}, f)
            r = run("theory", "--config", cfg, "--alpha", "1,4", "--out", f"{tmp}/run")
            self.assertEqual(r.returncode, 0, r.stderr)
            self.assertEqual([row["alpha"] for row in read_csv(f"{tmp}/run/theory_ridge.csv")], ["1", "4"])


class FailurePaths(unittest.TestCase):
    def test_domain_error_flushes_and_writes_manifest(self):
        with tempfile.TemporaryDirectory() as out:
            r = run("theory", "--spec", f"{SPECS}/fig3.json", "--alpha", "0.5,1",
                    "--methods", "bayes,kernel:-5", "--feature", "sign", "--out", out)
            self.assertEqual(r.returncode, 3)
            self.assertTrue(r.stderr.startswith("error: "))
            self.assertEqual(len(read_csv(f"{out}/theory_bayes_regression.csv")), 2)
            with open(f"{out}/theory_kernel.csv") as f:
                self.assertEqual(f.read().count("\n"), 1)
            with open(f"{out}/manifest.json") as f:
                m = json.load(f)
            self.assertEqual(m["status"], "error")
            self.assertIn("theory_kernel.csv", m["files"])

    def test_resource_cap(self):
        with tempfile.TemporaryDirectory() as out:
            r = run("simulate", "--spec", f"{SPECS}/fig2_top.json", "--d", 2, "--n", 20001,
                    "--methods", "kernel:1", "--trials", 1, "--n-test", 10, "--out", out)
            self.assertEqual(r.returncode, 4, r.stderr)
            with open(f"{out}/manifest.json") as f:
                self.assertEqual(json.load(f)["status"], "error")


class Simulation(unittest.TestCase):
    def test_identical_configs_give_identical_csvs(self):
        args = ["simulate", "--spec", f"{SPECS}/fig2_top.json", "--alpha", "0.5,2", "--d", 60, "--trials", 3,
                "--n-test", 500, "--methods", "ridge,kernel,rf,logistic:0.1", "--seed", 11]
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            self.assertEqual(run(*args, "--out", a).returncode, 0)
            self.assertEqual(run(*args, "--out", b).returncode, 0)
            names = sorted(n for n in os.listdir(a) if n.endswith(".csv"))
            self.assertEqual(len(names), 4)
            for n in names:
                with open(f"{a}/{n}", "rb") as fa, open(f"{b}/{n}", "rb") as fb:
                    self.assertEqual(fa.read(), fb.read(), n)
            with open(f"{a}/manifest.json") as fa, open(f"{b}/manifest.json") as fb:
                ma, mb = json.load(fa), json.load(fb)
            self.assertEqual(ma["config_hash"], mb["config_hash"])
            self.assertEqual(ma["status"], "ok")

    def test_seed_changes_results(self):
        base = ["simulate", "--spec", f"{SPECS}/fig2_top.json", "--alpha", "1", "--d", 40, "--trials", 2,
                "--n-test", 200]
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            run(*base, "--seed", 1, "--out", a)
            run(*base, "--seed", 2, "--out", b)
            self.assertNotEqual(read_csv(f"{a}/sim_ridge.csv"), read_csv(f"{b}/sim_ridge.csv"))


class Diagnostics(unittest.TestCase):
    def test_covariance_check_on_deep_tanh(self):
        with tempfile.TemporaryDirectory() as out:
            r = run("covcheck", "--spec", f"{SPECS}/tanh_depth7.json", "--d", 500, "--samples", "1e5",
                    "--layers", "4,7", "--out", out)
            self.assertEqual(r.returncode, 0, r.stderr)
            with open(f"{out}/covcheck.json") as f:
                layers = json.load(f)["layers"]
            self.assertEqual([l["layer"] for l in layers], [4, 7])
            for l in layers:
                self.assertLessEqual(l["rel_frobenius"], 0.02)

    def test_gaussianity_report(self):
        with tempfile.TemporaryDirectory() as out:
            r = run("gaussianity", "--spec", f"{SPECS}/tanh_depth7.json", "--d", "30,120", "--samples", 10000,
                    "--out", out)
            self.assertEqual(r.returncode, 0, r.stderr)
            with open(f"{out}/gaussianity.json") as f:
                dims = json.load(f)["dimensions"]
            self.assertEqual([d["d"] for d in dims], [30, 120])
            self.assertIn("qq_points", dims[0]["reports"][0])


if __name__ == "__main__":
    unittest.main(argv=sys.argv[:1], verbosity=2)
