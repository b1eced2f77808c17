#!/usr/bin/env python3
# Speaks the radare2 "-q0" protocol: every reply, including the startup
# banner, is terminated by a NUL byte.
import sys
import time

REPLIES = {
    "iI": "arch     x86\nbits     64\n",
    "afl": "0x00001000    1     10 main\n",
    "?e hello": "hello\n",
}


def reply(text):
    sys.stdout.write(text + "\0")
    sys.stdout.flush()


def main():
    reply("")
    for line in sys.stdin:
        cmd = line.rstrip("\n")
        if cmd == "q!":
            return
        if cmd.startswith("sleep "):
            time.sleep(float(cmd.split()[1]))
            reply("slept\n")
        elif cmd == "crash":
            sys.exit(3)
        elif cmd == "binary":
            sys.stdout.flush()
            sys.stdout.buffer.write(b"\x01\xff\xfeok\n\0")
            sys.stdout.buffer.flush()
        elif cmd == "big":
            reply("A" * 200000)
        else:
            reply(REPLIES.get(cmd, ""))


if __name__ == "__main__":
    main()
