#include "streamattn/error.hpp"

#include <iostream>
#include <utility>

namespace streamattn {

namespace {
WarningSink& sink_storage() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}
}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    return std::exchange(sink_storage(), std::move(sink));
}

void warn(std::string_view message) {
    if (auto& sink = sink_storage()) sink(message);
}

}  // namespace streamattn
