#include <cstdio>

int main() {
    std::puts("lsplat: subcommands not wired up yet");
    return 0;
}
