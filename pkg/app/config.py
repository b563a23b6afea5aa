"""
Configuration manager for sensipod.
Handles problem data, solver settings, sweep protocol and output paths.
"""

import os
import copy
import json
import logging
import appdirs

from app.errors import ConfigurationError

logger = logging.getLogger("sensipod.config")


class Config:
    """Configuration manager class"""

    DEFAULT_CONFIG = {
        "problem": {
            "epsilon": 1.0e-2,
            "velocity": "rotating",
            "reaction": 1.0,
            "alpha": 1.0,
            "final_time": 1.0,
            "source": 1.0,
            "target": 1.0,
            "initial": 0.0,
        },
        "discretization": {
            "subdivisions": 40,
            "time_steps": 60,
            "degree": 1,
            "sigma": None,  # 3p(p+1) when unset
        },
        "optimizer": {
            "tol": 1.0e-8,
            "max_iter": 30,
            "cg_tol": None,  # forcing term min(0.5, sqrt(|g|)) when unset
            "cg_max_iter": 200,
            "armijo_c": 1.0e-4,
            "backtrack": 0.5,
            "max_backtracks": 30,
        },
        "pod": {
            "gamma": 1.0e-2,
            "rank": 9,  # takes precedence over gamma
            "kinds": ["Y", "P", "YP"],
            "orthonormalize": False,
        },
        "sensitivity": {
            "method": "FD",
            "delta_mu": None,  # mu0 / 20 when unset
            "operator": "full",
            "concurrent": True,
        },
        "sweep": {
            "grid": "80:5:120",
            "methods": ["BPOD", "ExtPOD", "ExpPOD", "SAIM"],
            "saim_anchors": [1.0 / 125.0, 1.0 / 75.0],
            "ranks": None,  # list of fixed ranks for an error-vs-rank sweep
            "jobs": 1,
            "seed": 0,
            "gradient_checks": 3,
            "output_dir": "results",
        },
        "paths": {
            "cache_dir": None,  # Will be set based on platform
            "log_dir": None,    # Will be set based on platform
        },
    }

    # Overlays merged on top of the defaults
    PROFILES = {
        "paper": {
            "discretization": {"subdivisions": 40, "time_steps": 60},
        },
        "desk": {
            "discretization": {"subdivisions": 8, "time_steps": 12},
            # Too few snapshots for nine modes; select by energy instead
            "pod": {"rank": None},
        },
    }

    def __init__(self, config_path=None, profile=None):
        """Initialize configuration"""
        self.app_name = "sensipod"
        self.config_file = "config.json"
        self.config_dir = appdirs.user_config_dir(self.app_name)
        self.config_path = config_path

        self.config = self._load_config(config_path)

        # Set platform-specific paths when the file leaves them open
        if self.config["paths"]["cache_dir"] is None:
            self.config["paths"]["cache_dir"] = appdirs.user_cache_dir(self.app_name)
        if self.config["paths"]["log_dir"] is None:
            self.config["paths"]["log_dir"] = appdirs.user_log_dir(self.app_name)

        self.profile = profile
        if profile is not None:
            self.apply_profile(profile)

    def _load_config(self, config_path):
        """Load configuration from file, falling back to defaults"""
        defaults = copy.deepcopy(self.DEFAULT_CONFIG)

        if config_path is None:
            config_path = os.path.join(self.config_dir, self.config_file)
            if not os.path.exists(config_path):
                return defaults
        elif not os.path.exists(config_path):
            raise ConfigurationError(f"Configuration file not found: {config_path}")

        try:
            with open(config_path, 'r') as f:
                loaded_config = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            logger.error(f"Error loading configuration: {e}")
            logger.info("Using default configuration")
            return defaults

        if not isinstance(loaded_config, dict):
            logger.error(f"Configuration in {config_path} is not a JSON object")
            return defaults

        merged_config = self._merge_configs(defaults, loaded_config)
        logger.info(f"Configuration loaded from {config_path}")
        return merged_config

    def _merge_configs(self, base_config, new_config):
        """Overlay file or profile sections on the settings; sections merge key by key"""
        merged = copy.deepcopy(base_config)
        for section, value in new_config.items():
            current = merged.get(section)
            if isinstance(current, dict) and isinstance(value, dict):
                merged[section] = self._merge_configs(current, value)
            else:
                merged[section] = value
        return merged

    def apply_profile(self, name):
        """Merge a named profile over the current configuration"""
        if name not in self.PROFILES:
            raise ConfigurationError(
                f"Unknown profile {name!r}; choose from {sorted(self.PROFILES)}"
            )
        self.config = self._merge_configs(self.config, self.PROFILES[name])
        self.profile = name
        logger.debug(f"Applied profile {name}")

    def get(self, section, key=None):
        """Setting `key` of a section, the whole section without a key, None when absent"""
        values = self.config.get(section)
        if values is None or key is None:
            return values
        return values.get(key)

    def set(self, section, key, value):
        """Override one setting in memory; command-line flags land here"""
        self.config.setdefault(section, {})[key] = value
        logger.debug(f"Setting {section}.{key} = {value!r}")

    def save_config(self, path=None):
        """Save configuration to file"""
        if path is None:
            path = self.config_path or os.path.join(self.config_dir, self.config_file)

        try:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(path, 'w') as f:
                json.dump(self.config, f, indent=4)
            logger.info(f"Configuration saved to {path}")
            return True
        except IOError as e:
            logger.error(f"Error saving configuration: {e}")
            return False

    def optimizer_options(self):
        """Keyword arguments for the Newton-CG driver"""
        opts = self.config["optimizer"]
        return {
            "tol": float(opts["tol"]),
            "max_iter": int(opts["max_iter"]),
            "cg_tol": None if opts["cg_tol"] is None else float(opts["cg_tol"]),
            "cg_max_iter": int(opts["cg_max_iter"]),
            "armijo_c": float(opts["armijo_c"]),
            "backtrack": float(opts["backtrack"]),
            "max_backtracks": int(opts["max_backtracks"]),
        }

    def sweep_config(self):
        """Build a SweepConfig from the current settings"""
        # Imported here to keep config free of model imports at module load
        from app.models.sweep import SweepConfig
        from app.utils.helpers import parse_grid

        problem = self.config["problem"]
        disc = self.config["discretization"]
        pod = self.config["pod"]
        sens = self.config["sensitivity"]
        sweep = self.config["sweep"]

        grid = sweep["grid"]
        try:
            if isinstance(grid, str):
                grid = parse_grid(grid)
            else:
                grid = [float(g) for g in grid]
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

        config = SweepConfig(
            subdivisions=int(disc["subdivisions"]),
            time_steps=int(disc["time_steps"]),
            epsilon=float(problem["epsilon"]),
            grid=grid,
            methods=list(sweep["methods"]),
            kinds=list(pod["kinds"]),
            gamma=None if pod["rank"] is not None else float(pod["gamma"]),
            rank=None if pod["rank"] is None else int(pod["rank"]),
            saim_anchors=tuple(float(a) for a in sweep["saim_anchors"]),
            delta_mu=None if sens["delta_mu"] is None else float(sens["delta_mu"]),
            sensitivity_method=str(sens["method"]).upper(),
            output_dir=str(sweep["output_dir"]),
            ranks=None if sweep.get("ranks") is None else [int(r) for r in sweep["ranks"]],
            jobs=int(sweep["jobs"]),
            seed=int(sweep["seed"]),
            gradient_checks=int(sweep.get("gradient_checks", 3)),
        )
        config.validate()
        return config
