"""
Common abstraction class for sqlite databases
"""

import os
import sqlite3

from valuerag.log import Logger


class SQLiteError(Exception):
    """
    Exception raised by SQLiteDatabase errors.
    """
    def __str__(self):
        return self.args[0]


class SQLiteDatabase(object):
    """
    sqlite3 file access wrapper
    """
    def __init__(self, db_path, tables_sql=None, foreign_keys=True):
        """
        Opens given database reference. If tables_sql list is given,
        each SQL command in the list is executed to initialize the
        database.
        """
        self.log = Logger('sqlite').default_stream
        self.db_path = db_path

        if db_path is None:
            raise SQLiteError('Database path is None')
        db_dir = os.path.dirname(os.path.abspath(db_path))
        if not os.path.isdir(db_dir):
            try:
                os.makedirs(db_dir)
            except OSError as emsg:
                raise SQLiteError('Error creating directory %s: %s' % (db_dir, emsg))

        try:
            self.conn = sqlite3.connect(self.db_path)
        except sqlite3.Error as emsg:
            raise SQLiteError('Error opening %s: %s' % (self.db_path, emsg))

        c = self.cursor
        try:
            if foreign_keys:
                c.execute('PRAGMA foreign_keys=ON')
                c.fetchone()
            for q in tables_sql or ():
                c.execute(q)
        except sqlite3.DatabaseError as emsg:
            self.close()
            raise SQLiteError('Error initializing %s: %s' % (self.db_path, emsg))

    def __del__(self):
        self.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        """
        Closes the database reference
        """
        if getattr(self, 'conn', None) is not None:
            self.conn.close()
            self.conn = None

    @property
    def cursor(self):
        if self.conn is None:
            raise SQLiteError('Database %s is closed' % self.db_path)
        return self.conn.cursor()

    def execute(self, query, params=()):
        """
        Execute one statement, returning the cursor
        """
        c = self.cursor
        try:
            c.execute(query, params)
        except sqlite3.DatabaseError as emsg:
            raise SQLiteError('Error executing SQL on %s: %s' % (self.db_path, emsg))
        return c

    def executemany(self, query, rows):
        c = self.cursor
        try:
            c.executemany(query, rows)
        except sqlite3.DatabaseError as emsg:
            raise SQLiteError('Error executing SQL on %s: %s' % (self.db_path, emsg))
        return c

    def commit(self):
        """
        Commit transaction
        """
        return self.conn.commit()

    def as_dict(self, cursor, result):
        """
        Return a query result from sqlite as dictionary based on cursor
        field descriptions.
        """
        data = {}
        for i, k in enumerate([e[0] for e in cursor.description]):
            data[k] = result[i]
        return data

    def fetch_dicts(self, query, params=()):
        c = self.execute(query, params)
        return [self.as_dict(c, row) for row in c.fetchall()]
