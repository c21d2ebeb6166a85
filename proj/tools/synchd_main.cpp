// synchd -- the untrusted synchronizer daemon
#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <thread>
#include <unistd.h>

#include "dcs/net.hpp"
#include "dcs/synchronizer.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dossier-cloud synchronizer: stores wrapped keys and "
                 "encrypted pending dossiers, never plaintext"};
    std::string listen = "127.0.0.1:7700";
    std::string data;
    std::string suite = dcs::kSuiteId;
    std::string log_level = "info";
    app.add_option("--listen", listen, "host:port to listen on (port 0 picks a free port)")
        ->capture_default_str();
    app.add_option("--data", data, "state directory (snapshot + log)")
        ->required();
    app.add_option("--suite", suite, "crypto suite identifier")
        ->capture_default_str();
    app.add_option("--log-level", log_level, "one of: quiet, info, debug")
        ->capture_default_str()
        ->check(CLI::IsMember({"quiet", "info", "debug"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help exits 0; anything else is a usage error, one line, exit 1
        return app.exit(e) == 0 ? 0 : 1;
    }

    // shutdown signals are consumed by a dedicated waiter thread
    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

    try {
        dcs::SyncService service(data, suite, dcs::Durability::Fsync);
        auto listener = dcs::net::TcpListener::bind(
            dcs::net::parse_endpoint(listen));
        dcs::net::SyncServer server(service, std::move(listener), suite);

        std::printf("listening on %s:%u\n",
                    dcs::net::parse_endpoint(listen).host.c_str(),
                    server.port());
        std::fflush(stdout);

        std::thread waiter([&] {
            int sig = 0;
            sigwait(&sigs, &sig);
            if (log_level != "quiet")
                std::fprintf(stderr, "synchd: signal %d, saving state\n", sig);
            server.stop();
        });

        server.run();
        // wake the waiter if run() ended without a signal
        kill(getpid(), SIGTERM);
        waiter.join();
        service.save();
        return 0;
    } catch (const dcs::Error& e) {
        std::fprintf(stderr, "synchd: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "synchd: %s\n", e.what());
        return 1;
    }
}
