#include "eegemo/threadpool.hpp"

#include <algorithm>

namespace eegemo {

ThreadPool::ThreadPool(unsigned threads) {
  const unsigned n = std::max(1u, threads);
  workers_.reserve(n - 1);
  for (unsigned i = 0; i + 1 < n; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& w : workers_) w.join();
}

unsigned ThreadPool::resolve(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1u;
}

void ThreadPool::parallel_for(size_t begin, size_t end,
                              const std::function<void(size_t, size_t)>& fn) {
  if (end <= begin) return;
  const size_t total = end - begin;
  const size_t nthreads = threads();
  if (nthreads == 1 || total == 1) {
    fn(begin, end);
    return;
  }

  const size_t nchunks = std::min<size_t>(nthreads, total);
  const size_t base = total / nchunks;
  const size_t rem = total % nchunks;
  {
    std::lock_guard<std::mutex> lock(mu_);
    chunks_.clear();
    size_t at = begin;
    for (size_t c = 0; c < nchunks; ++c) {
      const size_t len = base + (c < rem ? 1 : 0);
      chunks_.push_back({at, at + len});
      at += len;
    }
    fn_ = &fn;
    next_chunk_ = 0;
    pending_ = nchunks;
    ++generation_;
  }
  cv_work_.notify_all();

  // The caller works too, then waits for stragglers.
  while (run_one_chunk()) {
  }
  std::unique_lock<std::mutex> lock(mu_);
  cv_done_.wait(lock, [this] { return pending_ == 0; });
  fn_ = nullptr;
}

bool ThreadPool::run_one_chunk() {
  Chunk chunk{0, 0};
  const std::function<void(size_t, size_t)>* fn = nullptr;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (fn_ == nullptr || next_chunk_ >= chunks_.size()) return false;
    chunk = chunks_[next_chunk_++];
    fn = fn_;
  }
  (*fn)(chunk.begin, chunk.end);
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (--pending_ == 0) cv_done_.notify_all();
  }
  return true;
}

void ThreadPool::worker_loop() {
  uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [this, seen] {
        return stop_ || (fn_ != nullptr && generation_ != seen &&
                         next_chunk_ < chunks_.size());
      });
      if (stop_) return;
      seen = generation_;
    }
    while (run_one_chunk()) {
    }
  }
}

}  // namespace eegemo
