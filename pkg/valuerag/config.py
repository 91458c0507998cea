"""
Pipeline configuration file

One INI file validated against CONFIGSPEC. Command line flags override file
values; secrets only come from environment variables named in the file.
"""

import os
import json
import hashlib

from configobj import ConfigObj, ConfigObjError, flatten_errors

try:
    from configobj.validate import Validator
except ImportError:
    from validate import Validator

ENDPOINT_SECTIONS = ('value_encoder', 'product_encoder', 'generator')
DEFAULT_FILENAMES = {
    'taxonomy_path': 'taxonomy.jsonl',
    'corpus_path': 'corpus.jsonl',
    'pool_path': 'pool.jsonl',
}

CONFIGSPEC = """
taxonomy_path = string(default='')
corpus_path = string(default='')
pool_path = string(default='')
output = string(default='out')
template = string(default='')
k = integer(min=1, default=4)
m = integer(min=0, default=2)
concurrency = integer(min=1, default=4)
seed = integer(default=7)
shot_noise = float(min=0, max=1, default=0.0)
ood_ratio = float(min=0, max=1, default=0.0)

[value_encoder]
kind = option('builtin', 'remote', default='builtin')
url = string(default='')
model = string(default='')
token_env = string(default='')
dim = integer(min=0, default=0)
max_batch = integer(min=1, default=32)
timeout = float(min=0, default=30.0)
attempts = integer(min=1, max=10, default=3)
max_in_flight = integer(min=1, default=4)

[product_encoder]
kind = option('builtin', 'remote', default='builtin')
url = string(default='')
model = string(default='')
token_env = string(default='')
dim = integer(min=0, default=0)
max_batch = integer(min=1, default=32)
timeout = float(min=0, default=30.0)
attempts = integer(min=1, max=10, default=3)
max_in_flight = integer(min=1, default=4)

[generator]
kind = option('mock-oracle', 'mock-heuristic', 'mock-top1', 'remote', default='mock-oracle')
url = string(default='')
model = string(default='')
token_env = string(default='')
temperature = float(min=0, default=0.0)
max_tokens = integer(min=1, default=256)
max_prompt_chars = integer(min=1, default=32000)
timeout = float(min=0, default=60.0)
attempts = integer(min=1, max=10, default=3)
max_in_flight = integer(min=1, default=4)

[synth]
categories = integer(min=1, default=5)
products = integer(min=1, default=200)
attributes = integer(min=1, default=3)
values = integer(min=1, default=8)
pool_fraction = float(min=0, max=1, default=0.5)
noise = float(min=0, max=1, default=0.1)
null_fraction = float(min=0, max=1, default=0.2)
ood_fraction = float(min=0, max=1, default=0.0)
unannotated_fraction = float(min=0, max=1, default=0.0)
""".strip().splitlines()


class ConfigError(Exception):
    def __str__(self):
        return self.args[0]


class PipelineConfig(object):
    """
    Validated configuration values
    """
    def __init__(self, values, path=None):
        self.path = path
        self.values = values
        for key, value in values.items():
            if not isinstance(value, dict):
                setattr(self, key, value)
        self.value_encoder = dict(values['value_encoder'])
        self.product_encoder = dict(values['product_encoder'])
        self.generator = dict(values['generator'])
        self.synth = dict(values['synth'])

        for name, filename in DEFAULT_FILENAMES.items():
            if not getattr(self, name):
                setattr(self, name, os.path.join(self.output, filename))

        for name in ENDPOINT_SECTIONS:
            section = getattr(self, name)
            if section['kind'] == 'remote':
                missing = [key for key in ('url', 'model', 'token_env') if not section[key]]
                if missing:
                    raise ConfigError('[%s] remote kind requires %s' % (name, ', '.join(missing)))

    def as_dict(self):
        return json.loads(json.dumps(self.values))

    @property
    def hash(self):
        return hashlib.sha256(
            json.dumps(self.as_dict(), sort_keys=True, ensure_ascii=False).encode('utf-8')
        ).hexdigest()

    def credential(self, section):
        """
        Check the token variable of a remote section is set
        """
        name = getattr(self, section)['token_env']
        if not os.environ.get(name):
            raise ConfigError('[%s] token variable %s is not set' % (section, name))
        return name


def load_config(path=None, overrides=None):
    """
    Read, override and validate a configuration file

    overrides maps top-level keys, or (section, key) tuples, to values.
    """
    if path is not None and not os.path.isfile(path):
        raise ConfigError('No such configuration file: %s' % path)
    try:
        config = ConfigObj(path, configspec=CONFIGSPEC, encoding='utf-8', file_error=path is not None)
    except (ConfigObjError, IOError) as emsg:
        raise ConfigError('Error reading configuration %s: %s' % (path, emsg))

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(key, tuple):
            section, key = key
            if section not in config:
                config[section] = {}
            config[section][key] = value
        else:
            config[key] = value

    result = config.validate(Validator(), copy=True, preserve_errors=True)
    if result is not True:
        problems = []
        for sections, key, error in flatten_errors(config, result):
            name = '.'.join(list(sections) + [key or '(section)'])
            problems.append('%s: %s' % (name, error or 'missing'))
        raise ConfigError('Invalid configuration %s: %s' % (path or '(defaults)', '; '.join(problems)))

    unknown = [key for key in config.keys() if key not in config.configspec]
    if unknown:
        raise ConfigError('Unknown configuration keys: %s' % ', '.join(sorted(unknown)))

    return PipelineConfig(config.dict(), path)
