"""Guarded script runner executed inside the sandbox subprocess.

Usage: python -I _sandbox_runner.py <program.py>

Installs audit hooks that fail the process on network use, on writes
outside the working directory (the per-run temp dir), and on attempts to
spawn further processes, then runs the target program as __main__. Must
stay stdlib-only: it runs under an isolated interpreter with a scrubbed
environment.
"""

import os
import runpy
import sys

_BLOCKED_EVENTS = (
    "socket.__new__",
    "socket.bind",
    "socket.connect",
    "socket.getaddrinfo",
    "socket.gethostbyname",
    "socket.gethostbyaddr",
    "socket.sendmsg",
    "socket.sendto",
    "subprocess.Popen",
    "os.system",
    "os.exec",
    "os.posix_spawn",
    "os.spawn",
    "os.fork",
    "ctypes.dlopen",
)

_WRITE_MODE_CHARS = set("wax+")
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC

_MUTATING_FS_EVENTS = (
    "os.remove",
    "os.rename",
    "os.rmdir",
    "os.mkdir",
    "os.link",
    "os.symlink",
    "os.truncate",
    "os.chmod",
    "os.chown",
    "os.chdir",
    "shutil.rmtree",
    "shutil.move",
)


def _install_guards(allowed_dir):
    allowed = os.path.realpath(allowed_dir)

    def inside(path):
        if isinstance(path, int) or path is None:
            return True  # fd-based ops already passed a path check
        if isinstance(path, bytes):
            path = path.decode("utf-8", "replace")
        # realpath resolves relative paths against the live cwd, so chdir
        # tricks cannot widen the jail.
        real = os.path.realpath(str(path))
        return real == allowed or real.startswith(allowed + os.sep)

    def hook(event, args):
        if event in _BLOCKED_EVENTS:
            raise RuntimeError(f"sandbox: {event} is not allowed")
        if event == "open":
            path, mode, flags = args
            if mode is None:
                writing = bool(flags & _WRITE_FLAGS)
            else:
                writing = bool(_WRITE_MODE_CHARS & set(mode))
            if writing and not inside(path):
                raise RuntimeError(f"sandbox: write outside working dir: {path!r}")
        elif event in _MUTATING_FS_EVENTS:
            if args and not inside(args[0]):
                raise RuntimeError(f"sandbox: {event} outside working dir: {args[0]!r}")

    sys.addaudithook(hook)


def _apply_rlimits():
    # Best-effort: the resource module is POSIX-only, and some environments
    # refuse RLIMIT_AS. The wall-clock watchdog in the parent still applies.
    try:
        import resource
    except ImportError:
        return
    mem = os.environ.get("FDD_MEM_LIMIT")
    if mem:
        try:
            resource.setrlimit(resource.RLIMIT_AS, (int(mem), int(mem)))
        except (ValueError, OSError):
            pass
    cpu = os.environ.get("FDD_CPU_LIMIT")
    if cpu:
        try:
            resource.setrlimit(resource.RLIMIT_CPU, (int(cpu), int(cpu) + 1))
        except (ValueError, OSError):
            pass


def main():
    if len(sys.argv) < 2:
        print("usage: _sandbox_runner.py <program.py>", file=sys.stderr)
        return 2
    program = sys.argv[1]
    _apply_rlimits()
    _install_guards(os.getcwd())
    sys.argv = [program]
    runpy.run_path(program, run_name="__main__")
    return 0


if __name__ == "__main__":
    sys.exit(main())
