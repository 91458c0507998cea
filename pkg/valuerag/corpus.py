"""
Product corpus ingest and persistence

Product records:

    {"id": "p1", "title": "...", "description": "...", "category": "Bag",
     "labels": {"Brand": ["Channel"], "Condition": []}}

An empty label array is null ground truth. An attribute missing from labels
is unannotated and never evaluated.
"""

from collections import namedtuple

from valuerag.files import read_records, write_records, RecordFileError
from valuerag.log import Logger
from valuerag.taxonomy import canonical, NULL_MARKER

CorpusStats = namedtuple('CorpusStats', ['product_count', 'pa_pair_count', 'null_pair_count'])


class CorpusError(Exception):
    def __str__(self):
        return self.args[0]


class LabelValue(namedtuple('LabelValue', ['value', 'in_taxonomy'])):
    """
    One ground-truth value; in_taxonomy is False for OOD values
    """
    __slots__ = ()

    @property
    def ood(self):
        return not self.in_taxonomy


class Product(object):
    """
    A product with title, description, category and ground-truth labels

    labels maps attribute -> tuple of LabelValue, in input order.
    """
    def __init__(self, id, title, description, category, labels=None):
        self.id = id
        self.title = title
        self.description = description
        self.category = category
        self.labels = dict(labels or {})

    def __eq__(self, other):
        if not isinstance(other, Product):
            return NotImplemented
        return self.to_record() == other.to_record() and \
            self.ood_flags() == other.ood_flags()

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return '<Product %s %s>' % (self.id, self.category)

    def ground_truth(self, attribute):
        """
        Set of ground-truth value strings, or None for unannotated attributes
        """
        if attribute not in self.labels:
            return None
        return frozenset(label.value for label in self.labels[attribute])

    def ood_flags(self):
        return dict(
            (attribute, tuple(label.in_taxonomy for label in values))
            for attribute, values in self.labels.items()
        )

    def to_record(self):
        return {
            'id': self.id,
            'title': self.title,
            'description': self.description,
            'category': self.category,
            'labels': dict(
                (attribute, [label.value for label in values])
                for attribute, values in self.labels.items()
            ),
        }


def product_from_record(record, taxonomy, source='record'):
    """
    Validate one product record against the taxonomy
    """
    product_id = canonical(record.get('id'))
    if not product_id:
        raise CorpusError('%s: product without id' % source)
    for field in ('title', 'category'):
        if field not in record:
            raise CorpusError('%s: product %s missing field %s' % (source, product_id, field))
    for field in ('title', 'description', 'category'):
        if record.get(field) is not None and not isinstance(record[field], str):
            raise CorpusError('%s: product %s field %s must be a string' % (source, product_id, field))

    category = canonical(record['category'])
    if not taxonomy.has_category(category):
        raise CorpusError('%s: product %s has unknown category %s' % (source, product_id, category))
    schema = taxonomy.attribute_set(category)

    raw_labels = record.get('labels') or {}
    if not isinstance(raw_labels, dict):
        raise CorpusError('%s: product %s labels must be an object' % (source, product_id))

    labels = {}
    for attribute, values in raw_labels.items():
        attribute = canonical(attribute)
        if attribute not in schema:
            raise CorpusError('%s: product %s labels attribute %s not in schema of %s' % (
                source, product_id, attribute, category
            ))
        if attribute in labels:
            raise CorpusError('%s: product %s labels attribute %s twice' % (source, product_id, attribute))
        if not isinstance(values, list):
            raise CorpusError('%s: product %s label %s must be an array' % (source, product_id, attribute))
        items = []
        for value in values:
            if not isinstance(value, str):
                raise CorpusError('%s: product %s label %s has non-string value %r' % (
                    source, product_id, attribute, value
                ))
            value = canonical(value)
            if not value or value == NULL_MARKER:
                raise CorpusError('%s: product %s label %s has empty or reserved value %r' % (
                    source, product_id, attribute, value
                ))
            if value in [item.value for item in items]:
                raise CorpusError('%s: product %s label %s repeats %s' % (source, product_id, attribute, value))
            items.append(LabelValue(value, taxonomy.contains(category, attribute, value)))
        labels[attribute] = tuple(items)

    return Product(
        id=product_id,
        title=record.get('title') or '',
        description=record.get('description') or '',
        category=category,
        labels=labels,
    )


def ingest_products(path, taxonomy):
    """
    Load and validate a product file, preserving input order
    """
    log = Logger('corpus').default_stream
    products = []
    seen = set()
    try:
        for lineno, record in read_records(path):
            product = product_from_record(record, taxonomy, source='%s line %d' % (path, lineno))
            if product.id in seen:
                raise CorpusError('%s line %d: duplicate product id %s' % (path, lineno, product.id))
            seen.add(product.id)
            products.append(product)
    except RecordFileError as emsg:
        raise CorpusError(str(emsg))

    stats = corpus_stats(products)
    log.info('ingested %d products, %d labeled pairs, %d null pairs from %s' % (
        stats.product_count, stats.pa_pair_count, stats.null_pair_count, path
    ))
    return products


def serialize_products(products, path):
    return write_records(path, (product.to_record() for product in products))


def render_query(product):
    """
    Query text: trimmed title and description joined by one space
    """
    return ' '.join(part for part in (product.title.strip(), product.description.strip()) if part)


def corpus_stats(products):
    pa_pairs = 0
    null_pairs = 0
    for product in products:
        for values in product.labels.values():
            pa_pairs += 1
            if not values:
                null_pairs += 1
    return CorpusStats(len(products), pa_pairs, null_pairs)
