"""
Two-level retrieval: candidate attribute values and same-category products

Both levels are exact searches over small partitions: values are
partitioned by (category, attribute), products by category. Results are
ordered by descending cosine with ties broken by ascending identifier.
"""

import os
import json
import tempfile

from collections import namedtuple, OrderedDict
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from valuerag.corpus import render_query, product_from_record
from valuerag.embedding import cosine_scores, normalize, EmbeddingError, ZERO_SCORE
from valuerag.log import Logger
from valuerag.request import JSONRequestError
from valuerag.sqlite import SQLiteDatabase, SQLiteError
from valuerag.taxonomy import NULL_MARKER, canonical

SNAPSHOT_FORMAT = 1
SNAPSHOT_TABLES = (
    'CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL)',
    """CREATE TABLE entries (
        position INTEGER PRIMARY KEY,
        partition TEXT NOT NULL,
        key TEXT NOT NULL,
        payload TEXT NOT NULL,
        vector BLOB NOT NULL
    )""",
)

ValueCorpusEntry = namedtuple('ValueCorpusEntry', ['category', 'attribute', 'value', 'prompt', 'vector'])
Candidate = namedtuple('Candidate', ['value', 'score'])
FewShotExample = namedtuple('FewShotExample', ['product', 'rendered_labels'])


class RetrievalError(Exception):
    def __str__(self):
        return self.args[0]


class UnknownPartitionError(RetrievalError):
    pass


class SnapshotError(RetrievalError):
    pass


class CandidateSet(object):
    """
    Ranked candidate values of one attribute, null marker last unless ranked
    """
    def __init__(self, attribute, candidates):
        self.attribute = attribute
        self.candidates = tuple(Candidate(*c) for c in candidates)

    def __eq__(self, other):
        if not isinstance(other, CandidateSet):
            return NotImplemented
        return self.attribute == other.attribute and self.candidates == other.candidates

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return '<CandidateSet %s: %s>' % (self.attribute, ', '.join(self.values))

    def __len__(self):
        return len(self.candidates)

    @property
    def values(self):
        return [c.value for c in self.candidates]

    @property
    def real_values(self):
        return [c.value for c in self.candidates if c.value != NULL_MARKER]

    def without(self, removed):
        """
        Copy without the given values; the null marker is always kept
        """
        removed = set(removed) - set([NULL_MARKER])
        return CandidateSet(self.attribute, [c for c in self.candidates if c.value not in removed])


def value_prompt(category, attribute, value):
    """
    'a {category} with {attribute} being {value}', lowercased, single spaced
    """
    return ' '.join(('a %s with %s being %s' % (category, attribute, value)).lower().split())


def vector_blob(vector):
    return np.asarray(vector, dtype='<f8').tobytes()


def blob_vector(blob):
    return np.frombuffer(blob, dtype='<f8').astype(np.float64)


class Partition(object):
    """
    Rows of one index partition: tie-break keys, payloads and a vector matrix
    """
    def __init__(self, keys, items, vectors, dim):
        self.keys = tuple(keys)
        self.items = tuple(items)
        if vectors:
            self.matrix = np.vstack(vectors)
        else:
            self.matrix = np.zeros((0, dim), dtype=np.float64)
        self.matrix.setflags(write=False)

    def __len__(self):
        return len(self.keys)

    def search(self, query, limit, exclude=None):
        scores = cosine_scores(query, self.matrix)
        keys = self.keys
        rows = range(len(keys))
        if exclude is not None:
            rows = [i for i in rows if keys[i] != exclude]
        order = sorted(rows, key=lambda i: (-scores[i], keys[i]))
        return [(self.items[i], float(scores[i])) for i in order[:limit]]


class ValueIndex(object):
    """
    Immutable value corpus partitioned by (category, attribute)
    """
    def __init__(self, encoder_identity, dim, entries):
        self.encoder_identity = encoder_identity
        self.dim = dim
        self.entries = tuple(entries)

        grouped = OrderedDict()
        for entry in self.entries:
            grouped.setdefault((entry.category, entry.attribute), []).append(entry)
        self.partitions = dict(
            (key, Partition([e.value for e in rows], rows, [e.vector for e in rows], dim))
            for key, rows in grouped.items()
        )

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return '<ValueIndex %s %d entries>' % (self.encoder_identity, len(self.entries))

    @property
    def max_partition_size(self):
        return max([len(p) for p in self.partitions.values()] or [0])

    def partition(self, category, attribute):
        try:
            return self.partitions[(canonical(category), canonical(attribute))]
        except KeyError:
            raise UnknownPartitionError('No value partition for (%s, %s)' % (category, attribute))

    def search(self, vector, category, attribute, k):
        """
        CandidateSet for a query vector
        """
        if k < 1:
            raise RetrievalError('k must be at least 1, got %s' % k)
        partition = self.partition(category, attribute)
        ranked = [Candidate(entry.value, score) for entry, score in partition.search(vector, k)]
        if NULL_MARKER not in [c.value for c in ranked]:
            ranked.append(Candidate(NULL_MARKER, ZERO_SCORE))
        return CandidateSet(canonical(attribute), ranked)


class ProductIndex(object):
    """
    Immutable product pool partitioned by category

    Every taxonomy category has a partition, possibly empty, and the
    attribute set used to render few-shot labels.
    """
    def __init__(self, encoder_identity, dim, schema, rows):
        self.encoder_identity = encoder_identity
        self.dim = dim
        self.schema = OrderedDict((c, tuple(a)) for c, a in schema.items())
        self.products = tuple(product for product, vector in rows)

        grouped = OrderedDict((category, []) for category in self.schema)
        for product, vector in rows:
            if product.category not in grouped:
                raise RetrievalError('Product %s has category %s outside the index schema' % (
                    product.id, product.category
                ))
            grouped[product.category].append((product, vector))
        self.partitions = dict(
            (category, Partition(
                [p.id for p, v in items], [p for p, v in items], [v for p, v in items], dim
            ))
            for category, items in grouped.items()
        )

    def __len__(self):
        return len(self.products)

    def __repr__(self):
        return '<ProductIndex %s %d products>' % (self.encoder_identity, len(self.products))

    def search(self, vector, category, m, exclude_id=None):
        if m < 0:
            raise RetrievalError('m must not be negative, got %s' % m)
        category = canonical(category)
        try:
            partition = self.partitions[category]
        except KeyError:
            raise UnknownPartitionError('No product partition for category %s' % category)
        if m == 0:
            return []
        attributes = self.schema[category]
        return [
            FewShotExample(product, render_shot_labels(product, attributes))
            for product, score in partition.search(vector, m, exclude=exclude_id)
        ]


def render_shot_labels(product, attributes):
    """
    One label per attribute: smallest ground-truth value, else the null marker
    """
    labels = OrderedDict()
    for attribute in attributes:
        values = product.ground_truth(attribute)
        labels[attribute] = values and min(values) or NULL_MARKER
    return labels


def _check_encoder(index, encoder):
    if index.encoder_identity != encoder.identity:
        raise RetrievalError('Index built with %s, queried with %s' % (index.encoder_identity, encoder.identity))


def _encode_partition(encoder, triples):
    """
    Encode prompts of one partition, locating the failing triple on error
    """
    prompts = [value_prompt(*triple) for triple in triples]
    try:
        return prompts, encoder.encode_batch(prompts)
    except (EmbeddingError, JSONRequestError):
        for triple, prompt in zip(triples, prompts):
            try:
                encoder.encode(prompt)
            except (EmbeddingError, JSONRequestError) as emsg:
                raise RetrievalError('Encoding (%s, %s, %s) failed: %s' % (triple + (emsg,)))
        raise


def build_value_index(taxonomy, encoder, workers=1):
    """
    Encode one prompt per taxonomy (category, attribute, value) triple
    """
    log = Logger('retrieval').default_stream
    partitions = [
        [(category, attribute, value) for value in values]
        for category, attribute, values in taxonomy.entries()
    ]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        encoded = list(pool.map(lambda triples: _encode_partition(encoder, triples), partitions))

    entries = []
    for triples, (prompts, vectors) in zip(partitions, encoded):
        for triple, prompt, vector in zip(triples, prompts, vectors):
            entries.append(ValueCorpusEntry(triple[0], triple[1], triple[2], prompt, normalize(vector)))

    index = ValueIndex(encoder.identity, encoder.dim, entries)
    log.info('built value index with %d entries in %d partitions' % (len(index), len(index.partitions)))
    return index


def build_product_index(products, taxonomy, encoder, workers=1, batch_size=64):
    """
    Encode the product pool; every taxonomy category gets a partition
    """
    log = Logger('retrieval').default_stream
    products = list(products)
    batches = [products[i:i + batch_size] for i in range(0, len(products), batch_size)]

    def encode(batch):
        try:
            return encoder.encode_batch([render_query(p) for p in batch])
        except (EmbeddingError, JSONRequestError) as emsg:
            raise RetrievalError('Encoding products %s..%s failed: %s' % (batch[0].id, batch[-1].id, emsg))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        encoded = list(pool.map(encode, batches))

    rows = []
    for batch, vectors in zip(batches, encoded):
        rows.extend((product, normalize(vector)) for product, vector in zip(batch, vectors))

    schema = OrderedDict((c, taxonomy.attribute_set(c)) for c in taxonomy.categories)
    index = ProductIndex(encoder.identity, encoder.dim, schema, rows)
    log.info('built product index with %d products in %d categories' % (len(index), len(schema)))
    return index


def retrieve_values(query, category, attribute, k, index, encoder):
    """
    Top-k candidate values of (category, attribute) for query text
    """
    _check_encoder(index, encoder)
    return index.search(encoder.encode(query), category, attribute, k)


def retrieve_products(query, category, m, index, encoder, exclude_id=None):
    """
    Top-m same-category products for query text, excluding exclude_id
    """
    _check_encoder(index, encoder)
    if m == 0:
        return index.search(None, category, 0)
    return index.search(encoder.encode(query), category, m, exclude_id=exclude_id)


class Retriever(object):
    """
    Both retrieval levels for one product with fixed k and m
    """
    def __init__(self, taxonomy, value_index, product_index, value_encoder, product_encoder, k, m):
        _check_encoder(value_index, value_encoder)
        _check_encoder(product_index, product_encoder)
        self.taxonomy = taxonomy
        self.value_index = value_index
        self.product_index = product_index
        self.value_encoder = value_encoder
        self.product_encoder = product_encoder
        self.k = k
        self.m = m

    def candidates(self, product, query=None):
        if query is None:
            query = render_query(product)
        vector = self.value_encoder.encode(query)
        return OrderedDict(
            (attribute, self.value_index.search(vector, product.category, attribute, self.k))
            for attribute in self.taxonomy.attribute_set(product.category)
        )

    def shots(self, product, query=None):
        if self.m == 0:
            return self.product_index.search(None, product.category, 0)
        if query is None:
            query = render_query(product)
        vector = self.product_encoder.encode(query)
        return self.product_index.search(vector, product.category, self.m, exclude_id=product.id)

    def retrieve(self, product):
        query = render_query(product)
        return self.candidates(product, query), self.shots(product, query)


def _write_snapshot(path, kind, index, rows):
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        os.makedirs(directory)
    fd, tmp = tempfile.mkstemp(prefix='.%s.' % os.path.basename(path), dir=directory)
    os.close(fd)
    os.unlink(tmp)
    try:
        with SQLiteDatabase(tmp, tables_sql=SNAPSHOT_TABLES) as db:
            meta = {
                'format': str(SNAPSHOT_FORMAT),
                'kind': kind,
                'encoder': index.encoder_identity,
                'dim': str(index.dim),
            }
            if kind == 'products':
                meta['schema'] = json.dumps(list(index.schema.items()), ensure_ascii=False)
            db.executemany('INSERT INTO meta (key, value) VALUES (?, ?)', sorted(meta.items()))
            db.executemany(
                'INSERT INTO entries (position, partition, key, payload, vector) VALUES (?, ?, ?, ?, ?)',
                [(position,) + row for position, row in enumerate(rows)],
            )
            db.commit()
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_index(index, path):
    """
    Write a value or product index snapshot
    """
    if isinstance(index, ValueIndex):
        rows = [
            (
                json.dumps([e.category, e.attribute], ensure_ascii=False),
                e.value,
                json.dumps({'prompt': e.prompt}, ensure_ascii=False),
                vector_blob(e.vector),
            )
            for e in index.entries
        ]
        return _write_snapshot(path, 'values', index, rows)

    rows = []
    for category in index.schema:
        partition = index.partitions[category]
        for product, vector in zip(partition.items, partition.matrix):
            rows.append((
                category,
                product.id,
                json.dumps(product.to_record(), ensure_ascii=False),
                vector_blob(vector),
            ))
    return _write_snapshot(path, 'products', index, rows)


def _read_snapshot(path, kind, encoder):
    if not os.path.isfile(path):
        raise SnapshotError('No index snapshot %s; run the index command first' % path)
    try:
        with SQLiteDatabase(path) as db:
            meta = dict((row['key'], row['value']) for row in db.fetch_dicts('SELECT key, value FROM meta'))
            rows = db.fetch_dicts('SELECT partition, key, payload, vector FROM entries ORDER BY position')
    except SQLiteError as emsg:
        raise SnapshotError('Unreadable index snapshot %s: %s' % (path, emsg))

    if meta.get('kind') != kind or meta.get('format') != str(SNAPSHOT_FORMAT):
        raise SnapshotError('%s is not a %s index snapshot' % (path, kind))
    if meta.get('encoder') != encoder.identity:
        raise SnapshotError('%s was built with encoder %s, not %s' % (path, meta.get('encoder'), encoder.identity))
    dim = int(meta['dim']) if meta.get('dim') not in (None, 'None') else None
    if encoder.dim is not None and dim != encoder.dim:
        raise SnapshotError('%s has dimension %s, encoder has %s' % (path, dim, encoder.dim))
    return meta, dim, rows


def load_value_index(path, encoder):
    meta, dim, rows = _read_snapshot(path, 'values', encoder)
    entries = []
    for row in rows:
        category, attribute = json.loads(row['partition'])
        payload = json.loads(row['payload'])
        entries.append(ValueCorpusEntry(category, attribute, row['key'], payload['prompt'], blob_vector(row['vector'])))
    return ValueIndex(meta['encoder'], dim, entries)


def load_product_index(path, encoder, taxonomy):
    meta, dim, rows = _read_snapshot(path, 'products', encoder)
    schema = OrderedDict((c, tuple(a)) for c, a in json.loads(meta['schema']))
    pool = []
    for row in rows:
        product = product_from_record(json.loads(row['payload']), taxonomy, source=path)
        pool.append((product, blob_vector(row['vector'])))
    return ProductIndex(meta['encoder'], dim, schema, pool)
