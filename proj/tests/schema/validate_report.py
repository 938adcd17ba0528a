"""Runs the CLI pipeline on small world panels and validates each report."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema


def run(cli, out, *args):
    subprocess.run([cli, "--out-dir", str(out), *args], check=True, stdout=subprocess.DEVNULL)
    return json.loads((out / "report.json").read_text())


def main():
    cli, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(pathlib.Path(schema_path).read_text())
    validator = jsonschema.Draft202012Validator(schema)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        common = ["--set", "controls.resamples=10", "--set", "controls.permutations=3",
                  "--set", "controls.null_count=100"]
        reports = [
            run(cli, tmp / "full", "run", "--synth", "3000", "--mlp-targets", "y_linear,y_quad",
                "--traverse", "HeavyAtomCount", "--set", "mlp.max_epochs=3", "--set", "mlp.min_epochs=2", "--set", "traversal.seeds=10",
                "--set", "traversal.steps=20", *common),
            run(cli, tmp / "lean", "run", "--synth", "1000", "--targets", "y_indep",
                "--set", "controls.bootstrap=false", "--set", "controls.null=false", *common),
        ]
        subprocess.run([cli, "synth", "make", "--rows", "800", "--out-dir", str(tmp / "panel")], check=True,
                       stdout=subprocess.DEVNULL)
        panel = tmp / "panel"
        reports.append(run(cli, tmp / "files", "run", "--latents", str(panel / "z.csv"), "--properties",
                           str(panel / "properties.csv"), *common))
        run(cli, tmp / "part_a", "run", "--synth", "3000", "--targets", "y_linear", *common)
        run(cli, tmp / "part_b", "run", "--synth", "3000", "--targets", "y_indep,HBA", *common)
        merge = [cli, "--out-dir", str(tmp / "merged"), "report", "merge"]
        subprocess.run(merge + [str(tmp / "part_a" / "report.json"), str(tmp / "part_b" / "report.json")],
                       check=True, stdout=subprocess.DEVNULL)
        reports.append(json.loads((tmp / "merged" / "report.json").read_text()))
        clash = subprocess.run(merge + [str(tmp / "full" / "report.json"), str(tmp / "lean" / "report.json")],
                               stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        if clash.returncode != 2:
            print(f"conflicting merge exited {clash.returncode}, expected 2")
            return 1

        failures = 0
        for i, report in enumerate(reports):
            errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
            names = [t["name"] for t in report["targets"]]
            if len(names) != len(set(names)):
                errors.append(f"duplicate targets: {names}")
            for e in errors:
                print(f"report {i}: {getattr(e, 'message', e)}")
            failures += len(errors)
        print(f"{len(reports)} reports checked, {failures} problems")
        return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
