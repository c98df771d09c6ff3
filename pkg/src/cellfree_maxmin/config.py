"""Flat key-value configuration file handling for the simulator."""

from dataclasses import dataclass, field, fields

from .scenario import ScenarioConfig

# Scenario powers appear in dBm in config files and are converted on load.
_DBM_KEYS = {"rho_bs", "rho_ue", "sigma2_bs", "sigma2_ue"}
_INT_SCENARIO_KEYS = {"num_bs", "antennas_per_bs", "num_ue", "antennas_per_ue",
                      "streams_per_ue", "seed"}


def dbm_to_watts(x):
    return 10.0 ** (float(x) / 10.0) * 1e-3


@dataclass
class SolverParams:
    """Hyperparameters of the alternating SCA / dual sub-gradient machinery."""

    delta0: float = 0.05            # base sub-gradient step, decays as delta0/sqrt(t)
    inner_iters_max: int = 50
    dual_tol: float = 1e-4          # stop when max|d eta| + max|d zeta| falls below
    lambda_step: float = 0.1        # BS power dual step, applied as lambda_step/rho_bs
    lambda_clip: float = 10.0       # cap on the power surplus, in multiples of rho_bs
    r_target_mode: str = "weighted"  # common-rate target of the dual drift: weighted|min
    mu_index_variant: bool = False  # alternative pairing of the UL duals in the solve
    heuristic_a: float = 1.0
    heuristic_b: float = 0.0
    bisect_tol: float = 1e-8        # relative power tolerance of the UE dual bisection


@dataclass
class TrainingParams:
    """Pilot dimensioning and overhead accounting knobs."""

    tau: int | None = None                 # pilot length; None -> num_ue * streams_per_ue
    pilot_mode: str = "orthogonal"         # orthogonal | random
    slots_per_pilot_block: float = 0.5
    pilot_blocks_override: dict = field(default_factory=dict)
    pilot_noise_scale: float = 1.0         # scales pilot-phase noise std and the debias term
    heuristic_schedule: list | None = None  # optional per-iteration (a, b) pairs


@dataclass
class SimConfig:
    """Everything one experiment needs: scenario, solver, and training settings."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverParams = field(default_factory=SolverParams)
    training: TrainingParams = field(default_factory=TrainingParams)

    def effective_tau(self):
        if self.training.tau is not None:
            return int(self.training.tau)
        return self.scenario.num_ue * self.scenario.streams_per_ue


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"cannot parse boolean from {text!r}")


def _parse_schedule(text):
    """Parse 'a:b,a:b,...' into a list of (a, b) float pairs."""
    pairs = []
    for chunk in text.split(","):
        a_str, _, b_str = chunk.partition(":")
        pairs.append((float(a_str), float(b_str or 0.0)))
    return pairs


def parse_config_text(text):
    """Parse flat ``key = value`` lines (with ``#`` comments) into a SimConfig."""
    scenario_kwargs = {}
    solver = SolverParams()
    training = TrainingParams()
    scenario_fields = {f.name for f in fields(ScenarioConfig)}
    solver_fields = {f.name: f.type for f in fields(SolverParams)}

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in scenario_fields:
            if key in _DBM_KEYS:
                scenario_kwargs[key] = dbm_to_watts(value)
            elif key in _INT_SCENARIO_KEYS:
                scenario_kwargs[key] = int(value)
            else:
                scenario_kwargs[key] = float(value)
        elif key == "mu_index_variant":
            solver.mu_index_variant = _parse_bool(value)
        elif key in solver_fields:
            current = getattr(solver, key)
            setattr(solver, key, type(current)(value))
        elif key == "tau":
            training.tau = int(value)
        elif key == "pilot_mode":
            if value not in ("orthogonal", "random"):
                raise ValueError(f"unknown pilot_mode {value!r}")
            training.pilot_mode = value
        elif key == "slots_per_pilot_block":
            training.slots_per_pilot_block = float(value)
        elif key == "pilot_noise_scale":
            training.pilot_noise_scale = float(value)
        elif key == "heuristic_schedule":
            training.heuristic_schedule = _parse_schedule(value)
        elif key.startswith("pilot_blocks_override."):
            scheme = key.split(".", 1)[1]
            training.pilot_blocks_override[scheme] = float(value)
        else:
            raise ValueError(f"unknown config key {key!r}")

    return SimConfig(scenario=ScenarioConfig(**scenario_kwargs), solver=solver,
                     training=training)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
