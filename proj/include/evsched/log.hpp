#pragma once

// Process-wide warning channel. Defaults to std::clog; callers may install a
// handler (e.g. to count or silence warnings during Monte-Carlo runs).

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace evsched {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
struct WarningChannel {
    std::mutex mutex;
    WarningHandler handler;
};
inline WarningChannel& warning_channel() {
    static WarningChannel channel;
    return channel;
}
}  // namespace detail

/// Installs `h` (empty restores std::clog) and returns the previous handler.
inline WarningHandler set_warning_handler(WarningHandler h) {
    auto& ch = detail::warning_channel();
    std::lock_guard lock(ch.mutex);
    return std::exchange(ch.handler, std::move(h));
}

/// Serialized, so worker threads never interleave messages.
inline void warn(const std::string& message) {
    auto& ch = detail::warning_channel();
    std::lock_guard lock(ch.mutex);
    if (ch.handler) ch.handler(message);
    else std::clog << "warning: " << message << "\n";
}

/// Restores the previous handler on scope exit.
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler h) : previous_(set_warning_handler(std::move(h))) {}
    ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler previous_;
};

}  // namespace evsched
