#include <cstdio>

int main() {
  std::printf("semiflat: no subcommands wired yet\n");
  return 1;
}
