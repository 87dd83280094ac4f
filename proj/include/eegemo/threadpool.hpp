#ifndef EEGEMO_THREADPOOL_HPP
#define EEGEMO_THREADPOOL_HPP

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace eegemo {

// Persistent worker pool for data-parallel loops. parallel_for splits
// [begin, end) into one contiguous chunk per thread; chunk boundaries depend
// only on the range and the thread count, and every output element is written
// by exactly one chunk, so results are bitwise identical for any thread count.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned threads);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  unsigned threads() const { return static_cast<unsigned>(workers_.size()) + 1; }

  // Runs fn(chunk_begin, chunk_end) for each chunk; blocks until all finish.
  // The calling thread participates.
  void parallel_for(size_t begin, size_t end,
                    const std::function<void(size_t, size_t)>& fn);

  // Resolves a requested thread count: 0 means use the hardware default.
  static unsigned resolve(unsigned requested);

 private:
  struct Chunk {
    size_t begin, end;
  };

  void worker_loop();
  bool run_one_chunk();

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(size_t, size_t)>* fn_ = nullptr;
  std::vector<Chunk> chunks_;
  size_t next_chunk_ = 0;
  size_t pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace eegemo

#endif
