"""
Command line script framework for valuerag tools
"""

import os
import sys
import signal
import argparse

from setproctitle import setproctitle

from valuerag.log import Logger

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_INPUT_ERROR = 3
EXIT_STAGE_FAILURE = 4


class ScriptError(Exception):
    def __str__(self):
        return self.args[0]


class Script(object):
    """
    Class for common CLI tool script

    Subclasses list (exception class, exit code) pairs in error_exit_codes;
    the first matching entry decides the exit status of a failed subcommand.
    """
    error_exit_codes = ()

    def __init__(self, name=None, description=None, epilog=None, debug_flag=True):
        self.name = os.path.basename(sys.argv[0])
        setproctitle('%s %s' % (self.name, ' '.join(sys.argv[1:])))
        signal.signal(signal.SIGINT, self.SIGINT)

        if name is None:
            name = self.name

        # Set to True to avoid any messages from self.message to be printed
        self.silent = False

        self.logger = Logger(name)
        self.log = self.logger.default_stream

        self.subcommand_parser = None
        self.subcommands = {}
        self.parser = argparse.ArgumentParser(
            prog=name,
            description=description,
            formatter_class=argparse.RawTextHelpFormatter,
            epilog=epilog,
            add_help=True,
            conflict_handler='resolve',
        )
        if debug_flag:
            self.parser.add_argument('--debug', action='store_true', help='Show debug messages')
        self.parser.add_argument('-v', '--verbose', action='store_true', help='Show progress messages')
        self.parser.add_argument('-q', '--quiet', action='store_true', help='Only show errors')

    def SIGINT(self, signum, frame):
        """
        Parse SIGINT signal by quitting the program cleanly with exit code 1
        """
        self.exit(EXIT_FAILURE)

    def exit(self, value=EXIT_OK, message=None):
        """
        Exit the script with given exit value.
        If message is not None, it is printed on stderr.
        """
        if isinstance(value, bool):
            value = value and EXIT_OK or EXIT_FAILURE
        else:
            try:
                value = int(value)
                if value < 0 or value > 255:
                    raise ValueError
            except ValueError:
                value = EXIT_FAILURE

        if message is not None:
            self.error(message)

        sys.exit(value)

    def message(self, message):
        if self.silent:
            return
        sys.stdout.write('%s\n' % message)

    def error(self, message):
        sys.stderr.write('%s\n' % message)

    def add_subcommand(self, command):
        """Add a subcommand parser instance

        Register named subcommand parser to argument parser

        Subcommand parser must be an instance of ScriptCommand class.

        Example usage:

        class StatsCommand(ScriptCommand):
            def run(self, args):
                self.script.message('counting products')

        script.add_subcommand(StatsCommand('stats', 'Count products'))

        """
        if self.subcommand_parser is None:
            self.subcommand_parser = self.parser.add_subparsers(
                dest='command', help='Please select one command mode below',
                title='Command modes'
            )
            self.subcommand_parser.required = True

        if not isinstance(command, ScriptCommand):
            raise ScriptError('Subcommand must be a ScriptCommand instance')

        parser = self.subcommand_parser.add_parser(
            command.name,
            help=command.short_description,
            description=command.description,
            epilog=command.epilog,
            formatter_class=argparse.RawTextHelpFormatter,
        )
        self.subcommands[command.name] = command
        command.script = self
        command.parser = parser
        command.add_arguments(parser)
        return parser

    def add_argument(self, *args, **kwargs):
        """
        Shortcut to add argument to main argumentparser instance
        """
        self.parser.add_argument(*args, **kwargs)

    def exit_code_for(self, error):
        for error_class, code in self.error_exit_codes:
            if isinstance(error, error_class):
                return code
        return None

    def parse_args(self, argv=None):
        """
        Call parse_args for parser and check for default logging flags
        """
        args = self.parser.parse_args(argv)

        if getattr(args, 'debug', False):
            Logger.set_global_level('DEBUG')

        elif getattr(args, 'quiet', False):
            self.silent = True

        elif getattr(args, 'verbose', False):
            Logger.set_global_level('INFO')

        return args

    def run(self, argv=None):
        """
        Parse arguments and run the selected subcommand

        Returns the exit status instead of exiting, so callers decide.
        """
        args = self.parse_args(argv)
        command = self.subcommands[args.command]
        try:
            command.run(args)
        except Exception as error:
            code = self.exit_code_for(error)
            if code is None:
                raise
            self.log.debug('%s failed: %s' % (args.command, error))
            self.error('%s: %s' % (args.command, error))
            return code
        return EXIT_OK


class ScriptCommand(object):
    """Script subcommand class

    Implement add_arguments to register subcommand flags and run to do
    the work. The parent script is available as self.script.

    """
    def __init__(self, name, short_description='', description='', epilog=''):
        self.script = None
        self.parser = None
        self.name = name
        self.short_description = short_description
        self.description = description or short_description
        self.epilog = epilog

    def add_arguments(self, parser):
        pass

    def run(self, args):
        """Run subcommands

        This method is called from parent script run with processed
        arguments, when a subcommand has been registered

        Implement your subcommand logic here.

        """
        raise ScriptError('Subcommand %s has no run method implemented' % self.name)
