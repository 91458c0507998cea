"""
Line-delimited JSON input and atomic output helpers
"""

import os
import io
import json
import tempfile


class RecordFileError(Exception):
    def __str__(self):
        return self.args[0]


def read_records(path):
    """
    Yield (line number, record) for every non-blank line of a JSONL file

    Raises RecordFileError naming the line for undecodable lines.
    """
    if not os.path.isfile(path):
        raise RecordFileError('No such file: %s' % path)
    with io.open(path, 'r', encoding='utf-8') as fd:
        for lineno, line in enumerate(fd, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as emsg:
                raise RecordFileError('%s line %d: invalid JSON: %s' % (path, lineno, emsg))
            if not isinstance(record, dict):
                raise RecordFileError('%s line %d: expected an object' % (path, lineno))
            yield lineno, record


def dumps(record):
    return json.dumps(record, ensure_ascii=False, separators=(', ', ': '))


def atomic_write(path, text):
    """
    Write text to path through a temporary file in the same directory
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        os.makedirs(directory)
    fd, tmp = tempfile.mkstemp(prefix='.%s.' % os.path.basename(path), dir=directory)
    try:
        with io.open(fd, 'w', encoding='utf-8', newline='\n') as out:
            out.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_records(path, records):
    """
    Atomically write records as line-delimited JSON
    """
    return atomic_write(path, ''.join('%s\n' % dumps(record) for record in records))


def write_json(path, data):
    return atomic_write(path, json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + '\n')


def read_json(path):
    if not os.path.isfile(path):
        raise RecordFileError('No such file: %s' % path)
    with io.open(path, 'r', encoding='utf-8') as fd:
        try:
            return json.load(fd)
        except ValueError as emsg:
            raise RecordFileError('%s: invalid JSON: %s' % (path, emsg))
