#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace annodiff {

/// Input/schema/argument problems. The CLI maps these to exit code 1;
/// everything else (std::runtime_error) maps to exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Span label type: Population, Intervention or Outcome annotations.
enum class LabelType { P, I, O };

/// Origin of an annotation layer.
enum class Group { crowd, expert, model };

inline std::string to_string(LabelType t) {
    switch (t) {
        case LabelType::P: return "P";
        case LabelType::I: return "I";
        case LabelType::O: return "O";
    }
    throw std::logic_error("bad LabelType");
}

inline std::string to_string(Group g) {
    switch (g) {
        case Group::crowd: return "crowd";
        case Group::expert: return "expert";
        case Group::model: return "model";
    }
    throw std::logic_error("bad Group");
}

inline LabelType label_type_from(std::string_view s) {
    if (s == "P") return LabelType::P;
    if (s == "I") return LabelType::I;
    if (s == "O") return LabelType::O;
    throw ValidationError("unknown label_type: " + std::string(s));
}

inline Group group_from(std::string_view s) {
    if (s == "crowd") return Group::crowd;
    if (s == "expert") return Group::expert;
    if (s == "model") return Group::model;
    throw ValidationError("unknown group: " + std::string(s));
}

inline constexpr LabelType kAllLabelTypes[] = {LabelType::P, LabelType::I, LabelType::O};

inline constexpr const char* kSchemaVersion = "1";

/// Runs fn(0..n-1) across up to `threads` workers. Tasks must be independent;
/// results keyed by index stay deterministic regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr error;
    const std::size_t workers = std::min(threads, n);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace annodiff
