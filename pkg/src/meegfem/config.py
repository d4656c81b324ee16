"""String-keyed configuration tree with dotted paths.

The driver consumes a flat mapping from dotted keys to strings, mirroring
a nested scripting-language dictionary. Two construction routes exist:
an INI-style text file (``[section]`` headers prefix the keys inside) and
programmatic nested mappings, which are flattened canonically. Unknown
keys are warned about, never silently accepted; missing required keys
raise errors that name the key.
"""

import warnings

from .errors import ConfigError

# every key the driver understands; values are short type tags used by
# the typed getters below
KNOWN_KEYS = {
    "type": "str",
    "solver_type": "str",
    "element_type": "str",
    "volume_conductor.grid.filename": "str",
    "volume_conductor.tensors.filename": "str",
    "source_model.type": "str",
    "source_model.reference_length": "float",
    "source_model.regularization": "float",
    "source_model.quadrature_order": "int",
    "solver.tolerance": "float",
    "solver.max_iterations": "int",
    "solver.preconditioner": "str",
    "solver.workers": "int",
    "meg.quadrature_order": "int",
    "meg.include_primary": "bool",
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


def flatten_mapping(tree, prefix=""):
    """Nested string-keyed mappings -> flat dotted-key dict of strings."""
    flat = {}
    for key, value in tree.items():
        if not isinstance(key, str):
            raise ConfigError("config keys must be strings, got %r" % (key,))
        path = key if not prefix else prefix + "." + key
        if isinstance(value, dict):
            flat.update(flatten_mapping(value, path))
        elif isinstance(value, bool):
            flat[path] = "true" if value else "false"
        else:
            flat[path] = str(value)
    return flat


class Config:
    """Flat dotted-key view over a configuration tree."""

    def __init__(self, entries=None):
        self.entries = {}
        if entries:
            self.entries.update(flatten_mapping(dict(entries)))

    @classmethod
    def from_file(cls, path):
        cfg = cls()
        section = ""
        with open(path, "r") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].split(";", 1)[0].strip()
                if not line:
                    continue
                if line.startswith("[") and line.endswith("]"):
                    section = line[1:-1].strip()
                    continue
                if "=" not in line:
                    raise ConfigError("%s:%d: expected `key = value`"
                                      % (path, lineno))
                key, value = line.split("=", 1)
                key = key.strip()
                if section:
                    key = section + "." + key
                cfg.entries[key] = value.strip()
        return cfg

    def set(self, key, value):
        self.entries[str(key)] = str(value)

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def require(self, key):
        if key not in self.entries:
            raise ConfigError("missing required config key `%s`" % key)
        return self.entries[key]

    def get_float(self, key, default=None):
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError("config key `%s` must be a number, got %r"
                              % (key, raw))

    def get_int(self, key, default=None):
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError("config key `%s` must be an integer, got %r"
                              % (key, raw))

    def get_bool(self, key, default=None):
        raw = self.entries.get(key)
        if raw is None:
            return default
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError("config key `%s` must be true or false, "
                              "got %r" % (key, raw))
        return _BOOL_WORDS[word]

    def warn_unknown(self):
        """Unknown keys are reported, never silently accepted."""
        for key in sorted(self.entries):
            if key not in KNOWN_KEYS:
                warnings.warn("unknown config key `%s`" % key, stacklevel=2)

    def validate(self):
        """Check the driver's fixed choices; returns self for chaining."""
        self.warn_unknown()
        kind = self.require("type")
        if kind == "unfitted":
            raise ConfigError(
                "`type = unfitted` (CutFEM/UDG drivers) is recognized but "
                "not implemented here; only `fitted` is supported")
        if kind != "fitted":
            raise ConfigError("unsupported `type = %s`; expected `fitted`"
                              % kind)
        solver = self.require("solver_type")
        if solver == "dg":
            raise ConfigError(
                "`solver_type = dg` (discontinuous Galerkin) is not "
                "implemented here; only `cg` is supported")
        if solver != "cg":
            raise ConfigError("unsupported `solver_type = %s`; expected "
                              "`cg`" % solver)
        element = self.require("element_type")
        if element not in ("tetrahedron", "hexahedron"):
            raise ConfigError("`element_type` must be tetrahedron or "
                              "hexahedron, got %r" % element)
        return self
