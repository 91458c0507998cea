"""
Category, attribute and standardized value taxonomy

The taxonomy file has one record per (category, attribute):

    {"category": "Bag", "attribute": "Brand", "values": ["LV", "Dior", "Channel"]}

Identifiers are NFC normalized and trimmed on ingest, and the taxonomy is
immutable once loaded.
"""

import unicodedata

from valuerag.files import read_records, write_records, RecordFileError
from valuerag.log import Logger

NULL_MARKER = 'None'


class TaxonomyError(Exception):
    def __str__(self):
        return self.args[0]


class InvalidTaxonomyError(TaxonomyError):
    pass


class UnknownCategoryError(TaxonomyError):
    pass


class UnknownAttributeError(TaxonomyError):
    pass


def canonical(text):
    """
    Canonical identifier form: NFC normalized, surrounding whitespace removed
    """
    if text is None:
        return ''
    if not isinstance(text, str):
        text = str(text)
    return unicodedata.normalize('NFC', text).strip()


class Taxonomy(object):
    """
    Immutable category -> attribute -> values tree
    """
    def __init__(self, entries):
        """
        Build from ordered (category, attribute, values) triples, validating
        every invariant. Identifiers are canonicalized here.
        """
        categories = []
        schema = {}
        values = {}
        order = []

        for category, attribute, items in entries:
            category = canonical(category)
            attribute = canonical(attribute)
            if not category:
                raise InvalidTaxonomyError('Empty category identifier')
            if not attribute:
                raise InvalidTaxonomyError('Empty attribute identifier in category %s' % category)
            if category not in schema:
                categories.append(category)
                schema[category] = []
            if attribute in schema[category]:
                raise InvalidTaxonomyError('Duplicate attribute (%s, %s)' % (category, attribute))

            ordered = []
            for value in items:
                value = canonical(value)
                if not value:
                    raise InvalidTaxonomyError('Empty value in (%s, %s)' % (category, attribute))
                if value == NULL_MARKER:
                    raise InvalidTaxonomyError('Reserved null marker used as value in (%s, %s, %s)' % (
                        category, attribute, value
                    ))
                if value in ordered:
                    raise InvalidTaxonomyError('Duplicate value (%s, %s, %s)' % (category, attribute, value))
                ordered.append(value)
            if not ordered:
                raise InvalidTaxonomyError('No values for (%s, %s)' % (category, attribute))

            schema[category].append(attribute)
            values[(category, attribute)] = tuple(ordered)
            order.append((category, attribute))

        if not categories:
            raise InvalidTaxonomyError('no categories')

        self.__categories = tuple(categories)
        self.__schema = dict((c, tuple(a)) for c, a in schema.items())
        self.__values = values
        self.__order = tuple(order)
        self.__members = dict((key, frozenset(v)) for key, v in values.items())

    def __eq__(self, other):
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return list(self.entries()) == list(other.entries())

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return '<Taxonomy %d categories, %d values>' % (len(self.__categories), self.value_count)

    @property
    def categories(self):
        return self.__categories

    @property
    def value_count(self):
        return sum(len(v) for v in self.__values.values())

    def has_category(self, category):
        return canonical(category) in self.__schema

    def attribute_set(self, category):
        """
        Attributes of category in schema order
        """
        key = canonical(category)
        try:
            return list(self.__schema[key])
        except KeyError:
            raise UnknownCategoryError('Unknown category: %s' % key)

    def values_of(self, category, attribute):
        """
        Standardized values of (category, attribute) in taxonomy order
        """
        category = canonical(category)
        attribute = canonical(attribute)
        if category not in self.__schema:
            raise UnknownCategoryError('Unknown category: %s' % category)
        try:
            return list(self.__values[(category, attribute)])
        except KeyError:
            raise UnknownAttributeError('Unknown attribute %s for category %s' % (attribute, category))

    def contains(self, category, attribute, value):
        """
        Exact (post-NFC, case-sensitive) membership test
        """
        members = self.__members.get((canonical(category), canonical(attribute)))
        return members is not None and canonical(value) in members

    def entries(self):
        """
        Yield (category, attribute, values) in load order
        """
        for key in self.__order:
            yield key[0], key[1], list(self.__values[key])

    def records(self):
        for category, attribute, values in self.entries():
            yield {'category': category, 'attribute': attribute, 'values': values}


def load_taxonomy(path):
    """
    Load a line-delimited taxonomy file
    """
    log = Logger('taxonomy').default_stream
    entries = []
    try:
        for lineno, record in read_records(path):
            missing = [f for f in ('category', 'attribute', 'values') if f not in record]
            if missing:
                raise InvalidTaxonomyError('%s line %d: missing fields %s' % (path, lineno, ', '.join(missing)))
            if not isinstance(record['values'], list):
                raise InvalidTaxonomyError('%s line %d: values must be an array' % (path, lineno))
            entries.append((record['category'], record['attribute'], record['values']))
    except RecordFileError as emsg:
        raise InvalidTaxonomyError(str(emsg))

    taxonomy = Taxonomy(entries)
    log.info('loaded %d categories and %d values from %s' % (
        len(taxonomy.categories), taxonomy.value_count, path
    ))
    return taxonomy


def serialize_taxonomy(taxonomy, path):
    """
    Write taxonomy in the load format, preserving order
    """
    return write_records(path, taxonomy.records())


def values_of(taxonomy, category, attribute):
    return taxonomy.values_of(category, attribute)


def attribute_set(taxonomy, category):
    return taxonomy.attribute_set(category)
