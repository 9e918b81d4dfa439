"""
Run configuration: a YAML mapping with documented keys, overridable from the command line.
"""
from pathlib import Path

import yaml

from .data import SplitMode, SplitSpec
from .exception import ConfigException, InvalidArgumentException, SplitException, UsageException
from .search import GENOTYPE_SELECTIONS, SearchConfig
from .tensor import derive_seed

SEARCH_SPLIT_DEFAULTS = {'mode': SplitMode.TOTAL_BUDGET.value, 'total': 610, 'train_fraction': 0.5}
EVAL_SPLIT_DEFAULTS = {'mode': SplitMode.PER_CLASS_COUNTS.value, 'train_per_class': 50, 'val_per_class': 30}
SPLIT_KEYS = ('mode', 'train_per_class', 'val_per_class', 'total', 'train_fraction')

# key -> (default, accepted types)
DEFAULTS = {
    'data': (None, (str,)),
    'out': (None, (str,)),
    'patch_size': (19, (int,)),
    'stem_channels': (16, (int,)),
    'normalize': (True, (bool,)),
    'search_epochs': (50, (int,)),
    'retrain_epochs': (100, (int,)),
    'batch_size': (16, (int,)),
    'w_lr': (1e-3, (int, float)),
    'w_lr_decay': (0.97, (int, float)),
    'arch_lr': (0.01, (int, float)),
    'arch_momentum': (0.9, (int, float)),
    'lambda': (1.0, (int, float)),
    'genotype_selection': ('final', (str,)),
    'search_split': (SEARCH_SPLIT_DEFAULTS, (dict,)),
    'eval_split': (EVAL_SPLIT_DEFAULTS, (dict,)),
}
MANDATORY = ('seed',)


def _check_type(key, value, types):
    # bool is an int subclass; only 'normalize' accepts it
    if isinstance(value, bool) and bool not in types:
        raise ConfigException(key, f"expected {'/'.join(t.__name__ for t in types)}, got {value!r}")
    if not isinstance(value, types):
        raise ConfigException(key, f"expected {'/'.join(t.__name__ for t in types)}, got {value!r}")


def _split_spec(key, values, seed):
    unknown = sorted(set(values) - set(SPLIT_KEYS))
    if unknown:
        raise ConfigException(f"{key}.{unknown[0]}", "unknown key")
    try:
        return SplitSpec(seed=seed, **values)
    except ValueError:
        raise ConfigException(f"{key}.mode", f"expected one of {[m.value for m in SplitMode]}, "
                                             f"got {values.get('mode')!r}") from None
    except (TypeError, SplitException) as e:
        raise ConfigException(key, str(e)) from None


class RunConfig:
    """
    Validated run configuration.

    :type values: dict
    :param values: configuration mapping; 'seed' is mandatory, every other key is optional (see DEFAULTS)

    :raise: ConfigException naming the first missing, unknown or malformed key
    """

    def __init__(self, values):
        if not isinstance(values, dict):
            raise ConfigException('<document>', "expected a mapping of keys to values")
        unknown = sorted(set(values) - set(DEFAULTS) - set(MANDATORY))
        if unknown:
            raise ConfigException(unknown[0], "unknown key")
        for key in MANDATORY:
            if values.get(key) is None:
                raise ConfigException(key, "missing mandatory key")
        _check_type('seed', values['seed'], (int,))

        merged = {}
        for key, (default, types) in DEFAULTS.items():
            value = values.get(key)
            if value is None:
                value = dict(default) if isinstance(default, dict) else default
            else:
                _check_type(key, value, types)
            merged[key] = value

        self.seed = values['seed']
        self.data = merged['data']
        self.out = merged['out']
        self.patch_size = merged['patch_size']
        self.stem_channels = merged['stem_channels']
        self.normalize = merged['normalize']

        if merged['genotype_selection'] not in GENOTYPE_SELECTIONS:
            raise ConfigException('genotype_selection', f"expected one of {list(GENOTYPE_SELECTIONS)}, "
                                                        f"got {merged['genotype_selection']!r}")
        try:
            self.search = SearchConfig(search_epochs=merged['search_epochs'], retrain_epochs=merged['retrain_epochs'],
                                       batch_size=merged['batch_size'], w_lr=merged['w_lr'],
                                       w_lr_decay=merged['w_lr_decay'], arch_lr=merged['arch_lr'],
                                       arch_momentum=merged['arch_momentum'], beta_decay_weight=merged['lambda'],
                                       seed=self.seed, genotype_selection=merged['genotype_selection'])
        except InvalidArgumentException as e:
            raise ConfigException('search', str(e)) from None
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ConfigException('patch_size', f"expected a positive odd number, got {self.patch_size}")
        if self.stem_channels < 1:
            raise ConfigException('stem_channels', f"expected a positive number, got {self.stem_channels}")

        self.search_split = _split_spec('search_split', {**SEARCH_SPLIT_DEFAULTS, **merged['search_split']}
                                        if 'mode' not in merged['search_split'] else merged['search_split'],
                                        derive_seed(self.seed, 'split.search'))
        self.eval_split = _split_spec('eval_split', {**EVAL_SPLIT_DEFAULTS, **merged['eval_split']}
                                      if 'mode' not in merged['eval_split'] else merged['eval_split'],
                                      derive_seed(self.seed, 'split.eval'))

    @classmethod
    def load(cls, path=None, overrides=None):
        """
        Reads a YAML config file and applies command-line overrides (overrides win).

        :type path: Path | str
        :param path: config file, or None to use only overrides

        :type overrides: dict
        :param overrides: key -> value; None values are ignored

        :rtype: RunConfig
        """
        values = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise UsageException(f"config file {path} does not exist")
            try:
                values = yaml.safe_load(path.read_text(encoding='utf-8'))
            except yaml.YAMLError as e:
                raise ConfigException('<document>', f"invalid YAML: {e}") from None
            if values is None:
                values = {}
            if not isinstance(values, dict):
                raise ConfigException('<document>', "expected a mapping of keys to values")
        values = dict(values)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(values)
