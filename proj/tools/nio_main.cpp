// CLI entry point; subcommands are wired up as the library grows.
#include <cstdio>

int main() {
  std::puts("nio: not yet wired");
  return 0;
}
