#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 1000;
  std::vector<double> a(n), b(n), c(n);
  for (int i = 0; i < n; i++) {
    a[i] = 0.5 * i;
    b[i] = 2.0 * i;
  }
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n; i++) c[i] = a[i] + b[i];
  auto t1 = std::chrono::steady_clock::now();
  double sum = 0.0;
  for (int i = 0; i < n; i++) sum += c[i];
  printf("n = %d\n", n);
  printf("checksum: %.6f\n", sum);
  printf("Total time: %.6f s\n", std::chrono::duration<double>(t1 - t0).count());
  printf("PASS\n");
  return 0;
}
