import os

import click

from app import create_app


def main(argv=None):
    """Run one CLI verb; returns 0 ok, 1 usage, 2 data, 3 numerical."""
    app = create_app(os.environ.get('FLASK_ENV', 'production'))
    group = click.Group('asr', commands=app.cli.commands,
                        help='Train, evaluate and decode dual-decoder ASR models.')
    try:
        with app.app_context():
            code = group.main(args=argv, prog_name='asr', standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    return code if isinstance(code, int) else 0
