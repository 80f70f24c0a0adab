#include <atomic>
#include <cstdio>
#include <thread>
#include <vector>

int main() {
    std::atomic<int> total{0};
    std::vector<std::thread> workers;
    for (int i = 0; i < 4; ++i) {
        workers.emplace_back([&total, i] { total += i; });
    }
    for (auto &w : workers) w.join();
    std::printf("total = %d\n", total.load());
    return total == 6 ? 0 : 1;
}
