from click import echo, style


def _echo_error(text: str) -> None:
    echo(style(text, fg='red'), err=True)


def _echo_success(text: str) -> None:
    echo(style(text, fg='green'))


def _echo_warning(text: str) -> None:
    echo(style(text, fg='yellow'), err=True)


def _echo_usual(text: str) -> None:
    echo(text)


def _echo_header(title: str, width: int = 70) -> None:
    echo('=' * width)
    echo(style(title, bold=True))
    echo('=' * width)


def _echo_section(title: str, width: int = 70) -> None:
    echo(f'\n{title}:')
    echo('-' * width)
