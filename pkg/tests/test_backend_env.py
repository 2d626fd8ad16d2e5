import json
import os
import subprocess
import sys

SNIPPET = """
import json, numpy as np
from efnpmle import kernels, backend_name
from efnpmle.models import make_model, UniformPrior, sample_mixture
from efnpmle.solver import fit_compressed
x, _ = sample_mixture(make_model('gl'), UniformPrior(-2, 2), 3000, seed=1)
g, rep = fit_compressed(make_model('gl'), x, J=15)
print(json.dumps({'backend': backend_name(), 'objective': rep.objective,
                  'mass': kernels.mixture_matvecs.__name__}))
"""


def run(flag):
    env = dict(os.environ, EFNPMLE_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_env_flag_selects_numpy_backend():
    a, b = run("0"), run("1")
    assert b["backend"] == "numpy" and b["mass"] == "mixture_matvecs_numpy"
    assert a["objective"] == __import__("pytest").approx(b["objective"], abs=1e-8)
